"""Self-similar measures and exact integration of piecewise-harmonic functions.

For a 0-harmonic function ``h`` the integral against a self-similar measure
is a fixed linear functional ``int h dmu = beta . h|V_0``.  Self-similarity
gives the fixed point ``beta = sum_j mu_j A_j^T beta``.  The same argument
for products gives a Gram matrix ``G = sum_j mu_j A_j^T G A_j`` with
``int h1 h2 dmu = h1|V_0 . G h2|V_0``.  Together they integrate m-harmonic
functions and their products exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import ConvergenceError

__all__ = [
    "SelfSimilarMeasure",
    "HarmonicIntegrator",
    "VertexMeasure",
    "harmonic_integrator",
    "gram_matrix",
    "integrate_piecewise_harmonic",
    "integrate_product",
    "vertex_measure",
    "mass_matrix",
    "l2_inner",
    "lp_norm",
]


@dataclass(frozen=True, eq=False)
class SelfSimilarMeasure:
    """Self-similar probability measure with weights ``mu_j``.

    Parameters
    ----------
    weights : array_like, shape (N,)
        Positive weights summing to one.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size == 0 or np.any(w <= 0):
            raise ValueError("measure weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"measure weights must sum to 1, got {w.sum():.15g}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n):
        return cls(np.full(int(n), 1.0 / int(n)))

    def cell_masses(self, m):
        """``mu(X_w)`` for every level-m word in word order."""
        out = np.ones(1)
        for _ in range(int(m)):
            out = np.kron(out, self.weights)
        return out

    def min_cell_mass(self, m):
        """Uniform lower bound ``V(m) = min_{|w| = m} mu(X_w)``."""
        return float(self.weights.min() ** int(m))


@dataclass(frozen=True, eq=False)
class HarmonicIntegrator:
    """Integration weights ``beta`` on ``V_0`` for 0-harmonic functions."""

    beta: np.ndarray
    iterations: int
    residual: float


def _check_measure(hs, measure):
    if measure.weights.size != hs.n_maps:
        raise ValueError(
            f"measure has {measure.weights.size} weights, structure has {hs.n_maps} maps"
        )


def harmonic_integrator(hs, measure, tol=1e-13, max_iter=10_000):
    """Fixed point ``beta = sum_j mu_j A_j^T beta`` with ``sum(beta) = 1``.

    Power iteration runs until successive iterates differ by less than
    ``tol`` and then continues while the difference still shrinks, so the
    result is accurate to round-off rather than to ``tol``.

    Raises
    ------
    ConvergenceError
        If the iteration does not reach ``tol`` within ``max_iter`` steps.
    """
    _check_measure(hs, measure)
    a = hs.extension_matrices
    op = np.einsum("j,jab->ba", measure.weights, a)
    beta = np.full(hs.n_boundary, 1.0 / hs.n_boundary)
    reached = None
    res = np.inf
    for it in range(1, max_iter + 1):
        new = op @ beta
        new /= new.sum()
        step = float(np.max(np.abs(new - beta)))
        beta = new
        if reached is not None and step >= res:
            return HarmonicIntegrator(beta, it, step)
        res = step
        if res < tol and reached is None:
            reached = it
        if res == 0.0:
            return HarmonicIntegrator(beta, it, res)
    if reached is not None:
        return HarmonicIntegrator(beta, max_iter, res)
    raise ConvergenceError(f"integrator did not converge (residual {res:.2e})")


def gram_matrix(hs, measure):
    """Gram matrix ``G`` of ``L^2(mu)`` products of 0-harmonic functions.

    ``G`` is the symmetric fixed point of ``G -> sum_j mu_j A_j^T G A_j``,
    normalized so that ``1^T G 1 = mu(X) = 1``.  The fixed-point equation is
    a small linear system in ``|V_0|^2`` unknowns and is solved directly.
    """
    _check_measure(hs, measure)
    a = hs.extension_matrices
    nb = hs.n_boundary
    # vec(A^T G A) = kron(A^T, A^T) vec(G) for row-major vec
    op = sum(w * np.kron(aj.T, aj.T) for w, aj in zip(measure.weights, a))
    system = np.vstack([op - np.eye(nb * nb), np.ones((1, nb * nb))])
    rhs = np.zeros(nb * nb + 1)
    rhs[-1] = 1.0
    vec, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    g = vec.reshape(nb, nb)
    g = 0.5 * (g + g.T)
    res = float(np.max(np.abs(np.einsum("j,jka,kl,jlb->ab", measure.weights, a, g, a) - g)))
    if res > 1e-12:
        raise ConvergenceError(f"Gram fixed point not unique or ill-conditioned ({res:.2e})")
    return g


def integrate_piecewise_harmonic(hs, measure, u, m, integrator=None):
    """Exact ``int u dmu`` for an m-harmonic function given by its V_m values."""
    integrator = integrator or harmonic_integrator(hs, measure)
    table = hs.level(m)
    u = np.asarray(u, dtype=float)
    cell_vals = u[table.cell_vertices]
    return float(measure.cell_masses(m) @ (cell_vals @ integrator.beta))


def integrate_product(hs, measure, u, v, m, gram=None):
    """Exact ``int u v dmu`` for m-harmonic ``u`` and ``v``."""
    gram = gram_matrix(hs, measure) if gram is None else gram
    cv = hs.level(m).cell_vertices
    uu = np.asarray(u, dtype=float)[cv]
    vv = np.asarray(v, dtype=float)[cv]
    return float(measure.cell_masses(m) @ np.einsum("ca,ab,cb->c", uu, gram, vv))


def mass_matrix(hs, measure, m, gram=None):
    """Sparse consistent mass matrix ``M[p, q] = int psi_p psi_q dmu`` on V_m."""
    gram = gram_matrix(hs, measure) if gram is None else gram
    cv = hs.level(m).cell_vertices
    nc, nb = cv.shape
    masses = measure.cell_masses(m)
    rows = np.repeat(cv, nb, axis=1).ravel()
    cols = np.tile(cv, (1, nb)).ravel()
    vals = (masses[:, None] * gram.ravel()[None, :]).ravel()
    n = hs.level(m).n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class VertexMeasure:
    """Lifted vertex measure ``mu^(m)({p}) = int psi_{p,m} dmu``."""

    level: int
    masses: np.ndarray

    @property
    def total(self):
        return float(self.masses.sum())

    @cached_property
    def matrix(self):
        return sp.diags(self.masses).tocsr()


def vertex_measure(hs, measure, m, integrator=None):
    """Vertex masses obtained by integrating every level-m harmonic spline."""
    integrator = integrator or harmonic_integrator(hs, measure)
    table = hs.level(m)
    contrib = measure.cell_masses(m)[:, None] * integrator.beta[None, :]
    masses = np.bincount(table.cell_vertices.ravel(), weights=contrib.ravel(),
                         minlength=table.n_vertices)
    return VertexMeasure(int(m), masses)


def l2_inner(u, v, vm):
    """``sum_p u(p) v(p) mu^(m)({p})``."""
    return float(np.sum(np.asarray(u) * np.asarray(v) * vm.masses))


def lp_norm(u, vm, p=2):
    """``l^p(mu^(m))`` norm; ``p = inf`` gives the max norm."""
    u = np.abs(np.asarray(u, dtype=float))
    if np.isinf(p):
        return float(u.max())
    return float(np.sum(u**p * vm.masses) ** (1.0 / p))
