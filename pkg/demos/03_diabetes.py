"""
Real data: the diabetes regression table
========================================

Linear, k-NN and tree members under repeated 10-fold cross-validation.
Pass a number of repetitions on the command line (default 2).
"""

import sys

from csge import EstimatorSpec, cross_validate, load_diabetes

data = load_diabetes()
print(data.n_samples, "rows,", data.n_features, "features")

specs = [
    EstimatorSpec("linear_least_squares"),
    EstimatorSpec("knn_regressor", {"k": 5}),
    EstimatorSpec("decision_tree", {"max_depth": 5}),
]

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 2
report = cross_validate(specs, data, n_folds=10, seeds=range(n_seeds))
print(report.to_markdown())

# the exponents chosen in each outer fold
etas = report.etas
print("eta per fold (global, local, time), first five:")
for e in etas[:5]:
    print("  ", [round(v, 3) for v in e])
