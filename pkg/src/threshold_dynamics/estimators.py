"""scikit-learn style wrappers: each sample is one interface, ``transform`` flows it.

>>> import numpy as np
>>> from threshold_dynamics.estimators import GraphFlow
>>> x = np.linspace(0, np.pi, 200)
>>> flow = GraphFlow(scheme="mbo", time=0.1, n_steps=2, extents=(0, np.pi))
>>> flow.fit_transform(np.arcsinh(np.cos(x))[None, :]).shape
(1, 200)
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .graph import METHODS, GraphInterface, evolve
from .grid import IndicatorGrid, grid_evolve
from .schemes import SCHEME_NAMES, make_scheme


def _check_common(scheme, time, n_steps):
    if scheme not in SCHEME_NAMES:
        raise ValueError(f"scheme must be one of {SCHEME_NAMES}, got {scheme!r}")
    if not time > 0:
        raise ValueError("time must be positive")
    if int(n_steps) < 1:
        raise ValueError("n_steps must be at least 1")


class GraphFlow(TransformerMixin, BaseEstimator):
    """Evolve graph interfaces by threshold dynamics.

    Each row of ``X`` holds heights on a 1D lattice, or a flattened 2D lattice
    when ``lattice_shape`` is given.

    Parameters
    ----------
    scheme : str
        One of ``mbo``, ``ruuth``, ``twokernel``, ``mstage4``.
    time : float
        Final time.
    n_steps : int
        Number of outer steps; ``dt = time / n_steps``.
    extents : tuple
        ``(lo, hi)`` for curves, or one pair per axis for surfaces.
    boundary : {"even", "periodic"}
    lattice_shape : tuple of int, optional
        Shape of a surface lattice; rows of ``X`` must have ``prod`` entries.
    method : {"auto", "quadrature", "lattice"}
    """

    def __init__(
        self,
        scheme="twokernel",
        time=1.0,
        n_steps=16,
        extents=(0.0, np.pi),
        boundary="even",
        lattice_shape=None,
        method="auto",
    ):
        self.scheme = scheme
        self.time = time
        self.n_steps = n_steps
        self.extents = extents
        self.boundary = boundary
        self.lattice_shape = lattice_shape
        self.method = method

    def fit(self, X, y=None):
        _check_common(self.scheme, self.time, self.n_steps)
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        X = check_array(X, dtype=np.float64)
        shape = (X.shape[1],) if self.lattice_shape is None else tuple(self.lattice_shape)
        if int(np.prod(shape)) != X.shape[1]:
            raise ValueError(f"rows have {X.shape[1]} heights, lattice_shape needs {np.prod(shape)}")
        # build once to validate extents and boundary
        GraphInterface(X[0].reshape(shape), self.extents, self.boundary)
        self.spec_ = make_scheme(self.scheme)
        self.shape_ = shape
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} heights per row, got {X.shape[1]}")
        dt = self.time / int(self.n_steps)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            f0 = GraphInterface(row.reshape(self.shape_), self.extents, self.boundary)
            out[i] = evolve(f0, self.spec_, dt, int(self.n_steps), method=self.method).heights.ravel()
        return out


class GridFlow(TransformerMixin, BaseEstimator):
    """Evolve periodic grid indicators; rows of ``X`` are flattened 0/1 grids.

    Parameters
    ----------
    grid_shape : tuple of int
        2D or 3D grid dimensions.
    spacing : float
        Cell size (uniform).
    scheme, time, n_steps
        As for :class:`GraphFlow`.
    """

    def __init__(self, grid_shape=(128, 128), spacing=2.0 / 128, scheme="mbo", time=0.01, n_steps=10):
        self.grid_shape = grid_shape
        self.spacing = spacing
        self.scheme = scheme
        self.time = time
        self.n_steps = n_steps

    def fit(self, X, y=None):
        _check_common(self.scheme, self.time, self.n_steps)
        X = check_array(X, dtype=None)
        shape = tuple(int(n) for n in self.grid_shape)
        if len(shape) not in (2, 3) or int(np.prod(shape)) != X.shape[1]:
            raise ValueError("grid_shape must be 2D or 3D and match the row length")
        if not np.all((X == 0) | (X == 1)):
            raise ValueError("grid rows must be 0/1 indicators")
        self.spec_ = make_scheme(self.scheme)
        self.shape_ = shape
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_array(X, dtype=None)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} cells per row, got {X.shape[1]}")
        dt = self.time / int(self.n_steps)
        out = np.empty(X.shape, dtype=np.uint8)
        for i, row in enumerate(X):
            sigma = IndicatorGrid(row.reshape(self.shape_), self.spacing)
            out[i] = grid_evolve(sigma, self.spec_, dt, int(self.n_steps)).values.ravel()
        return out
