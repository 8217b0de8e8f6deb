"""Discrete first-order calculus on level-m graph forms.

Vector fields are antisymmetric edge functions stored once per edge in the
orientation ``head -> tail`` of the underlying :class:`GraphForm`.  The inner
product carries the conductance weights, so that ``||grad f||^2 = E(f)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import HardyLevelError
from .harmonic import assemble_form, harmonic_extension

__all__ = [
    "VectorField",
    "LevelFunction",
    "SymbolicField",
    "HardyEstimate",
    "gradient",
    "act",
    "inner",
    "realize",
    "hardy_bound",
    "hardy_optimal",
    "drift_quadratic_form",
    "restrict_cellwise",
]


@dataclass(frozen=True, eq=False)
class VectorField:
    """Element of the discrete module ``H^(m)``.

    Parameters
    ----------
    form : GraphForm
        Form whose edges carry the field.
    values : ndarray, shape (n_edges,)
        ``v(head, tail)``; the reversed orientation is ``-v``.
    """

    form: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.form.n_edges,):
            raise ValueError(
                f"field needs {self.form.n_edges} edge values, got shape {vals.shape}"
            )
        object.__setattr__(self, "values", vals)

    @classmethod
    def zero(cls, form):
        return cls(form, np.zeros(form.n_edges))

    @property
    def level(self):
        return self.form.level

    def __add__(self, other):
        _same_form(self, other)
        return VectorField(self.form, self.values + other.values)

    def __sub__(self, other):
        _same_form(self, other)
        return VectorField(self.form, self.values - other.values)

    def __mul__(self, scalar):
        return VectorField(self.form, float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.form, -self.values)

    def norm(self):
        return float(np.sqrt(inner(self, self)))

    def is_zero(self):
        return not np.any(self.values)


def _same_form(v, w):
    if v.form is not w.form:
        if v.form.level != w.form.level or v.form.n_edges != w.form.n_edges:
            raise ValueError("vector fields live on different levels")


def gradient(form, f):
    """``(grad f)(p, q) = f(p) - f(q)`` on every edge."""
    f = np.asarray(f, dtype=float)
    if f.shape != (form.n_vertices,):
        raise ValueError(f"function needs {form.n_vertices} values, got {f.shape}")
    return VectorField(form, form.incidence @ f)


def act(g, v):
    """Action ``(g . v)(p, q) = (g(p) + g(q)) / 2 * v(p, q)``."""
    g = np.asarray(g, dtype=float)
    return VectorField(v.form, (v.form.averaging @ g) * v.values)


def inner(v, w):
    """``<v, w> = sum_e c_e v_e w_e`` (half the sum over ordered pairs)."""
    _same_form(v, w)
    return float(np.sum(v.form.conductance * v.values * w.values))


@dataclass(frozen=True, eq=False)
class LevelFunction:
    """Function given by its values on ``V_n`` and extended n-harmonically."""

    values: np.ndarray
    level: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "level", int(self.level))

    @classmethod
    def constant(cls, hs, value=1.0):
        return cls(np.full(hs.n_boundary, float(value)), 0)

    def at_level(self, hs, m):
        """Values of the n-harmonic extension on ``V_m`` (``m >= n``)."""
        if m < self.level:
            raise ValueError(f"function lives on level {self.level}, cannot realize at {m}")
        size = hs.level(self.level).n_vertices
        if self.values.shape != (size,):
            raise ValueError(f"function on V_{self.level} needs {size} values")
        return harmonic_extension(hs, self.values, self.level, m)


@dataclass(frozen=True, eq=False)
class SymbolicField:
    """Finite combination ``b = sum_i g_i . grad f_i`` of harmonic data.

    Parameters
    ----------
    terms : tuple of (LevelFunction, LevelFunction)
        Pairs ``(g_i, f_i)``.
    """

    terms: tuple = field(default_factory=tuple)

    @property
    def level(self):
        """Smallest level at which every term is realizable."""
        levels = [lvl for g, f in self.terms for lvl in (g.level, f.level)]
        return max(levels, default=0)

    @classmethod
    def gradient_of(cls, hs, f, coefficient=1.0):
        """Field ``coefficient * grad f``."""
        return cls(((LevelFunction.constant(hs, coefficient), f),))

    def __add__(self, other):
        return SymbolicField(self.terms + other.terms)

    def scaled(self, factor):
        """Multiply every ``g_i`` by ``factor``."""
        return SymbolicField(tuple(
            (LevelFunction(float(factor) * g.values, g.level), f) for g, f in self.terms
        ))

    def is_zero(self):
        return len(self.terms) == 0


def realize(sym, hs, m):
    """Level-m field ``sum_i H_m g_i . grad(H_m f_i)``."""
    form = assemble_form(hs, m)
    out = np.zeros(form.n_edges)
    for g, f in sym.terms:
        gv = g.at_level(hs, m)
        fv = f.at_level(hs, m)
        out += (form.averaging @ gv) * (form.incidence @ fv)
    return VectorField(form, out)


@dataclass(frozen=True)
class HardyEstimate:
    """Constants of ``||g . b||^2 <= delta E(g) + gamma ||g||^2``."""

    delta: float
    gamma: float
    M: float
    n0: int | None
    V: float | None
    norm_sq: float

    def bound(self, energy, l2_sq):
        return self.delta * energy + self.gamma * l2_sq


def hardy_bound(b, hs, measure, M, diameters=None):
    """Hardy constants ``delta = 1/M`` and ``gamma = 2 ||b||^2 / V(n0)``.

    ``n0`` is the smallest level not exceeding the field's level whose cells
    all have resistance diameter at most ``1 / (2 M ||b||^2)``.

    Parameters
    ----------
    b : VectorField
    hs : HarmonicStructure
    measure : SelfSimilarMeasure
    M : float
    diameters : sequence of float, optional
        Precomputed ``max_w diam(X_w)`` per level, index = level.

    Raises
    ------
    HardyLevelError
        If no admissible ``n0 <= m`` exists; ``required_level`` estimates the
        first admissible level by contracting the level-m diameter with the
        largest renormalization weight.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    m = b.level
    norm_sq = inner(b, b)
    if norm_sq == 0.0:
        return HardyEstimate(1.0 / M, 0.0, float(M), 0, measure.min_cell_mass(0), 0.0)
    threshold = 1.0 / (2.0 * M * norm_sq)
    diam = math.inf
    for n0 in range(m + 1):
        diam = (diameters[n0] if diameters is not None and n0 < len(diameters)
                else hs.max_cell_diameter(n0))
        if diam <= threshold:
            V = measure.min_cell_mass(n0)
            return HardyEstimate(1.0 / M, 2.0 * norm_sq / V, float(M), n0, V, norm_sq)
    # finer levels are not built; diameters shrink at least like r_max per level
    r_max = float(np.max(hs.renormalization))
    extra = max(1, math.ceil(math.log(threshold / diam) / math.log(r_max))) if diam > 0 else 1
    raise HardyLevelError(
        f"no admissible cell level <= {m}: max diameter {diam:.3e} at level {m} "
        f"exceeds {threshold:.3e}; about level {m + extra} would be needed",
        required_level=m + extra)


def drift_quadratic_form(b):
    """Sparse matrix ``B`` with ``g^T B g = ||g . b||^2``."""
    s = b.form.averaging
    return (s.T @ sp.diags(b.form.conductance * b.values**2) @ s).tocsr()


def hardy_optimal(b, delta, mass, dense_limit=3000):
    """Sharp ``gamma`` for a given ``delta``.

    Largest eigenvalue of ``(B - delta L) x = gamma M x`` clamped at zero,
    where ``B`` is the drift quadratic form, ``L`` the energy matrix and
    ``M`` the (diagonal, positive) mass matrix.

    Parameters
    ----------
    b : VectorField
    delta : float
    mass : ndarray
        Diagonal of the mass matrix.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if b.is_zero():
        return 0.0
    mat = drift_quadratic_form(b) - delta * b.form.laplacian
    mass = np.asarray(mass, dtype=float)
    n = mass.size
    if n <= dense_limit:
        top = sla.eigh(mat.toarray(), np.diag(mass), eigvals_only=True,
                       subset_by_index=[n - 1, n - 1])[0]
    else:
        scale = 1.0 / np.sqrt(mass)
        sym = sp.diags(scale) @ mat @ sp.diags(scale)
        top = spla.eigsh(sym, k=1, which="LA", return_eigenvectors=False)[0]
    return float(max(top, 0.0))


def restrict_cellwise(hs, harmonics, n, m=None):
    """Field equal to ``grad h_w`` on the edges of each level-n cell ``w``.

    Parameters
    ----------
    hs : HarmonicStructure
    harmonics : array_like, shape (N**n, |V_n|)
        Row ``w`` holds the V_n values of the n-harmonic function ``h_w``.
    n : int
        Cell level.
    m : int, optional
        Level of the resulting field (default ``n``).  Each level-m edge is
        assigned to the level-n ancestor of its owning cell.
    """
    m = n if m is None else int(m)
    if m < n:
        raise ValueError("field level must not be below the cell level")
    h = np.asarray(harmonics, dtype=float)
    table_n = hs.level(n)
    if h.shape != (table_n.n_cells, table_n.n_vertices):
        raise ValueError(
            f"expected harmonics of shape {(table_n.n_cells, table_n.n_vertices)}")
    form = assemble_form(hs, m)
    ext = harmonic_extension(hs, h.T, n, m)  # (|V_m|, cells)
    ancestor = form.owner // hs.n_maps ** (m - n)
    vals = ext[form.heads, ancestor] - ext[form.tails, ancestor]
    return VectorField(form, vals)
