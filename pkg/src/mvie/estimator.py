"""scikit-learn style wrapper around one forward scattering problem."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .farfield import far_field
from .grid import ShapeSpec, rasterize
from .media import MediumSpec
from .scatter import IncidentSpec, LSOperator, solve


class MovingDielectricScatterer(BaseEstimator):
    """Solve for the field scattered by a moving dielectric body.

    ``fit(shape)`` rasterises the body and solves the forward problem;
    ``predict(directions)`` returns the electric far-field pattern.

    Parameters
    ----------
    eps_r, mu_r : float
        Relative permittivity and permeability of the body.
    velocity : 3-tuple
        Body velocity in normalized units (``c = 1``).
    omega : float
        Angular frequency.
    h : float
        Lattice spacing.
    margin : int
        Empty voxels around the body.
    method : {"krylov", "born"}
    tol : float
    incident_direction, polarization : 3-tuples
        Plane-wave incidence.

    Attributes
    ----------
    operator_ : LSOperator
    report_ : SolveReport
    """

    def __init__(self, eps_r=1.2, mu_r=1.0, velocity=(0.0, 0.0, 0.0), omega=1.0, h=0.1,
                 margin=1, method="krylov", tol=1e-8,
                 incident_direction=(0.0, 0.0, 1.0), polarization=(1.0, 0.0, 0.0)):
        self.eps_r = eps_r
        self.mu_r = mu_r
        self.velocity = velocity
        self.omega = omega
        self.h = h
        self.margin = margin
        self.method = method
        self.tol = tol
        self.incident_direction = incident_direction
        self.polarization = polarization

    def _medium(self):
        return MediumSpec.normalized(self.eps_r, self.mu_r, self.velocity, self.omega)

    def fit(self, X, y=None):
        """Solve the forward problem for the body ``X`` (a ShapeSpec or its record dict)."""
        shape = X if isinstance(X, ShapeSpec) else ShapeSpec(**X)
        m = self._medium()
        dom = rasterize(shape, self.h, self.margin)
        self.operator_ = LSOperator(m, dom)
        d = np.asarray(self.incident_direction, dtype=float)
        inc = IncidentSpec("plane", tuple(d / np.linalg.norm(d)), tuple(self.polarization))
        self.report_ = solve(self.operator_, inc.on(dom, m), self.method, tol=self.tol)
        self.shape_ = shape
        return self

    def predict(self, X):
        """Electric far field ``E_inf`` at the unit directions ``X`` of shape ``(n, 3)``."""
        check_is_fitted(self, "report_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise ValueError(f"directions must have 3 columns, got {X.shape[1]}")
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
        return far_field(self.operator_, self.report_.total, X).E_inf
