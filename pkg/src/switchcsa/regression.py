"""Least-squares projection of path functionals onto a basis of the node state.

The state at a node is the spot, plus the short rate when it is stochastic.
State columns are standardized across the paths being regressed; a column
with zero cross-sectional spread (every path at ``t_0``, a zero-vol spot)
carries no information and is dropped, so the projection collapses to the
sample mean there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e

from .errors import InvalidArgument, NumericalFailure

FAMILIES = ("monomial", "hermite", "piecewise_linear")


@dataclass(frozen=True)
class RegressionSpec:
    """Basis choice.

    ``degree`` is the polynomial degree in spot for ``monomial`` and
    ``hermite``, and the number of quantile cells for ``piecewise_linear``.
    The short rate, when stochastic, always enters linearly.
    """

    family: str = "monomial"
    degree: int = 3
    cutoff: float = 1e-13

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown basis family {self.family!r}; choose from {FAMILIES}")
        if int(self.degree) != self.degree or self.degree < 1:
            raise InvalidArgument("basis degree must be a positive integer")


def _standardize(col: np.ndarray) -> np.ndarray | None:
    m = col.mean()
    s = col.std()
    if not np.isfinite(s) or s <= 1e-12 * (1.0 + abs(m)):
        return None
    return (col - m) / s


def _hat_functions(x: np.ndarray, cells: int) -> np.ndarray:
    knots = np.unique(np.quantile(x, np.linspace(0.0, 1.0, cells + 1)))
    m = len(knots)
    if m < 2:
        return np.ones((len(x), 1))
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, m - 2)
    w = np.clip((x - knots[idx]) / (knots[idx + 1] - knots[idx]), 0.0, 1.0)
    H = np.zeros((len(x), m))
    rows = np.arange(len(x))
    H[rows, idx] = 1.0 - w
    H[rows, idx + 1] += w
    return H


def design_matrix(spec: RegressionSpec, state: np.ndarray) -> np.ndarray:
    """Basis functions evaluated on ``state`` of shape ``(n, s)``."""
    state = np.asarray(state, dtype=float)
    if state.ndim == 1:
        state = state[:, None]
    n = state.shape[0]
    spot = _standardize(state[:, 0])
    extra = [z for z in (_standardize(state[:, j]) for j in range(1, state.shape[1])) if z is not None]

    if spot is None:
        cols = [np.ones(n)]
    elif spec.family == "monomial":
        cols = [spot**p for p in range(spec.degree + 1)]
    elif spec.family == "hermite":
        cols = [hermite_e.hermeval(spot, np.eye(spec.degree + 1)[p]) for p in range(spec.degree + 1)]
    else:
        H = _hat_functions(state[:, 0], spec.degree)
        return np.column_stack([H] + extra) if extra else H
    return np.column_stack(cols + extra)


def gram_pinv(X: np.ndarray, cutoff: float = 1e-13):
    """Column scales, eigenvectors and inverse eigenvalues of the scaled Gram matrix.

    Eigenvalues below ``cutoff`` times the largest are treated as exact
    collinearity and projected out.
    """
    scale = np.sqrt((X * X).sum(axis=0))
    scale[scale == 0] = 1.0
    Xs = X / scale
    G = Xs.T @ Xs
    w, V = np.linalg.eigh(G)
    keep = w > cutoff * max(w.max(), np.finfo(float).tiny)
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    cond = float(np.sqrt(w.max() / w[keep].min())) if keep.any() else np.inf
    return Xs, scale, V, inv, cond, int(keep.sum())


class NodeRegression:
    """Projector onto the basis at one node, reusable for several targets."""

    def __init__(self, spec: RegressionSpec, state: np.ndarray):
        X = design_matrix(spec, state)
        n, m = X.shape
        if n < m:
            raise NumericalFailure(
                f"regression design has {m} basis functions but only {n} paths; basis too rich for path count"
            )
        if not np.all(np.isfinite(X)):
            raise NumericalFailure("non-finite values in regression design matrix")
        self.n_basis = m
        self._Xs, _, self._V, self._inv, self.condition_number, self.rank = gram_pinv(X, spec.cutoff)

    def fit(self, y: np.ndarray) -> np.ndarray:
        """Fitted values (conditional-expectation estimates) for ``y`` of shape (n,) or (n, q)."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise NumericalFailure("non-finite regression target")
        b = self._Xs.T @ y
        coef = self._V @ (self._inv[:, None] * (self._V.T @ b)) if y.ndim == 2 else self._V @ (self._inv * (self._V.T @ b))
        return self._Xs @ coef


def project(spec: RegressionSpec, state: np.ndarray, y: np.ndarray) -> np.ndarray:
    return NodeRegression(spec, state).fit(y)


def projected_on(
    spec: RegressionSpec, state: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Project ``y`` on the basis over the paths in ``mask``; zero elsewhere.

    Returns the fitted array (full length) and the condition number
    (``nan`` when the mask is empty).
    """
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    if mask is None:
        reg = NodeRegression(spec, state)
        return reg.fit(y), reg.condition_number
    if not mask.any():
        return out, float("nan")
    reg = NodeRegression(spec, state[mask])
    out[mask] = reg.fit(y[mask])
    return out, reg.condition_number
