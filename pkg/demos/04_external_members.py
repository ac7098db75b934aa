"""
Members trained elsewhere
=========================

Any model can join the ensemble as long as its out-of-fold predictions
are written as a long table: sample_id, member_id, lead_time, prediction.
"""

import tempfile
from pathlib import Path

import numpy as np

from csge import (
    Dataset,
    PredictionCube,
    fit_from_cube,
    import_external_predictions,
    load_model,
    save_model,
    write_external_predictions,
)

rng = np.random.default_rng(0)
X = rng.uniform(-3, 3, size=(200, 2))
y = np.where(X[:, 0] > 0, X[:, 0] ** 2, -X[:, 1])

# pretend two outside models produced these; one is good for x0 > 0, the other elsewhere
p_right = np.where(X[:, 0] > 0, y, 0.0) + rng.normal(scale=0.1, size=200)
p_left = np.where(X[:, 0] <= 0, y, 0.0) + rng.normal(scale=0.1, size=200)

tmp = Path(tempfile.mkdtemp())
write_external_predictions(PredictionCube(np.stack([p_right, p_left], axis=1), ("right", "left")), tmp / "oof.csv")
print((tmp / "oof.csv").read_text().splitlines()[:4])

cube = import_external_predictions(tmp / "oof.csv")
model = fit_from_cube(cube, Dataset(X, y))
print("eta:", np.round(model.eta.as_array(), 3))

# prediction needs the members' outputs for the query as well
for x in ([2.0, 1.0], [-2.0, 1.0]):
    truth = x[0] ** 2 if x[0] > 0 else -x[1]
    members = [truth if x[0] > 0 else 0.0, truth if x[0] <= 0 else 0.0]
    value, bd = model.predict(np.array(x), member_predictions=members)
    print(f"x={x}: fused {value:.4f} (truth {truth}), final weights {np.round(bd.w_final, 4)}")

save_model(model, tmp / "model.json")
again = load_model(tmp / "model.json")
q, members = np.array([-2.0, 1.0]), [0.0, -1.0]
print("reloaded model agrees:", again.predict(q, member_predictions=members)[0] == model.predict(q, member_predictions=members)[0])
