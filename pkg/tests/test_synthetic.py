import math

import numpy as np
import pytest

from csge.synthetic import generate_synthetic, sample_x, target


def test_targets():
    assert target("global", math.pi / 2) == pytest.approx(5.0)
    assert target("local", 12.0) == np.sin(12.0) + 10
    assert target("local", 9.0) == np.sin(9.0)
    assert target("time", 0.0, 5) == 10.0
    assert target("time", 0.0, 2) == 0.0


def test_generate_shapes():
    data, specs = generate_synthetic("time", 80)
    assert data.targets.shape == (80, 6)
    assert [s.label for s in specs] == ["f1", "f2"]
    data, _ = generate_synthetic("global")
    assert data.n_samples == 500 and data.features[0, 0] == 0 and data.features[-1, 0] == 20


def test_rejects_bad_requests():
    with pytest.raises(ValueError):
        generate_synthetic("spatial")
    with pytest.raises(ValueError):
        generate_synthetic("global", 10)


def test_seeded_sampling():
    a = sample_x(100, seed=1)
    assert np.array_equal(a, sample_x(100, seed=1)) and np.all(np.diff(a) >= 0)
    assert a.min() >= 0 and a.max() <= 20
