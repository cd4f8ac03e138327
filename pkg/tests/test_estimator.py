import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mvie.estimator import MovingDielectricScatterer
from mvie.grid import ShapeSpec


def test_params_roundtrip():
    est = MovingDielectricScatterer(eps_r=1.5, h=0.2)
    assert est.get_params()["eps_r"] == 1.5
    c = clone(est).set_params(tol=1e-6)
    assert c.tol == 1e-6 and c.h == 0.2


def test_fit_predict():
    est = MovingDielectricScatterer(eps_r=1.5, velocity=(0.02, 0, 0), h=0.1)
    with pytest.raises(NotFittedError):
        est.predict([[0, 0, 1.0]])
    est.fit({"kind": "sphere", "size": (0.4,)})
    E = est.predict([[0, 0, 1.0], [1.0, 0, 0], [0, 0, 3.0]])
    assert E.shape == (3, 3) and np.abs(E).max() > 0
    np.testing.assert_allclose(E[0], E[2])
    assert est.report_.converged
    with pytest.raises(ValueError):
        est.predict([[1.0, 0.0]])


def test_fit_accepts_shape_spec():
    est = MovingDielectricScatterer(h=0.1).fit(ShapeSpec.sphere(0.3))
    assert est.shape_.size == (0.3,)
