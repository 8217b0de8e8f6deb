"""Non-symmetric bilinear forms with drift terms and their constants.

The level-m form is

    Q(f, g) = <a grad f, grad g> - <g . b, grad f> - <f . bh, grad g> - <c f, g>

with the conductance-weighted edge inner product and the lumped vertex
measure for the last term.  Matrices use the orientation
``A[i, j] = Q(e_j, e_i)``: rows are test functions, columns trial functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

from .exceptions import HardyLevelError, InfeasibleCoefficientsError
from .fields import (
    LevelFunction,
    SymbolicField,
    VectorField,
    hardy_bound,
    hardy_optimal,
    realize,
)
from .harmonic import assemble_form
from .measures import SelfSimilarMeasure, vertex_measure

__all__ = [
    "FormCoefficients",
    "AssembledForm",
    "Diagnostics",
    "assemble",
    "diagnostics",
    "form_constants",
    "symmetric_part",
    "add_alpha",
    "vertex_values",
]

SHIFT_MARGIN = 0.1
M_GRID = tuple(2.0**k for k in range(13))


def vertex_values(coef, hs, m):
    """Values on ``V_m`` of a scalar coefficient.

    ``coef`` may be a number, a :class:`LevelFunction` (extended harmonically)
    or an array already living on ``V_m``.
    """
    n = hs.level(m).n_vertices
    if isinstance(coef, LevelFunction):
        return coef.at_level(hs, m)
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"coefficient needs {n} values on V_{m}, got shape {arr.shape}")
    return arr


def _edge_field(b, hs, m):
    form = assemble_form(hs, m)
    if b is None:
        return VectorField.zero(form)
    if isinstance(b, SymbolicField):
        return realize(b, hs, m)
    if isinstance(b, VectorField):
        if b.form.n_edges != form.n_edges or b.form.level != m:
            raise ValueError(f"vector field is not defined on level {m}")
        return b
    raise TypeError(f"unsupported drift field type {type(b).__name__}")


@dataclass(frozen=True, eq=False)
class FormCoefficients:
    """Coefficients ``(a, b, b_hat, c)`` and declared ellipticity bounds.

    Parameters
    ----------
    a : float, LevelFunction or ndarray
        Scalar diffusion coefficient with ``lam < a < Lam``.
    b, b_hat : SymbolicField, VectorField or None
        Drift fields; ``None`` means zero.
    c : float, LevelFunction or ndarray
        Zero-order coefficient.
    lam, Lam : float, optional
        Declared bounds; default ``min(a) / 2`` and ``2 max(a)``.
    M : float, optional
        Hardy parameter; by default chosen to maximize ``c0``.
    """

    a: object = 1.0
    b: object = None
    b_hat: object = None
    c: object = 0.0
    lam: float | None = None
    Lam: float | None = None
    M: float | None = None

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class Diagnostics:
    """Constants of the two-sided bounds and the sector condition."""

    lam: float
    Lam: float
    M: float
    delta_b: float
    gamma_b: float
    delta_b_hat: float
    gamma_b_hat: float
    n0_b: int | None
    n0_b_hat: int | None
    lambda0: float
    c0: float
    c1: float
    Lambda_inf: float
    c_inf: float
    K: float
    sup_c: float
    V_m: float
    gamma_opt_b: float = math.nan
    gamma_opt_b_hat: float = math.nan
    notes: tuple = field(default_factory=tuple)

    @property
    def feasible(self):
        """``lambda0 > 0`` and ``c0 > 0`` without any shift."""
        return self.lambda0 > 0 and self.c0 > 0

    def as_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "notes"}
        out["feasible"] = self.feasible
        return out


def form_constants(lam, Lam, delta_b, gamma_b, delta_bh, gamma_bh, c_values):
    """``lambda0, c0, Lambda_inf, c_inf, K`` from the closed formulas.

    ``K`` is ``nan`` unless ``lambda0 > 0`` and ``c0 > 0``.
    """
    sd_b, sd_bh = math.sqrt(delta_b), math.sqrt(delta_bh)
    lambda0 = 0.5 * (lam - sd_b - sd_bh)
    sup_c = float(np.max(np.abs(c_values)))
    essinf = float(np.min(-np.asarray(c_values)))
    if lambda0 > 0:
        c0 = essinf - (gamma_b + gamma_bh) / (2.0 * lambda0)
    else:
        c0 = -math.inf
    Lambda_inf = Lam + sd_b + sd_bh + 1.0
    c_inf = 0.5 * (gamma_b + gamma_bh) + sup_c
    if lambda0 > 0 and c0 > 0:
        K = ((Lam + sd_b + sd_bh + math.sqrt(gamma_b) + math.sqrt(gamma_bh)) / lam
             + 2.0 * sup_c / c0 + 1.0)
    else:
        K = math.nan
    return lambda0, c0, Lambda_inf, c_inf, K


@dataclass(frozen=True, eq=False)
class AssembledForm:
    """Stiffness and mass matrices of a level-m form.

    Attributes
    ----------
    level : int
    stiffness : scipy.sparse.csr_matrix
        ``A[i, j] = Q(e_j, e_i)``.
    masses : ndarray
        Lumped vertex measure ``mu^(m)``.
    graph : GraphForm
    a, c : ndarray
        Vertex values of the scalar coefficients.
    b, b_hat : VectorField
        Realized drift fields.
    """

    level: int
    stiffness: sp.csr_matrix
    masses: np.ndarray
    graph: object
    a: np.ndarray
    c: np.ndarray
    b: VectorField
    b_hat: VectorField
    hs: object
    measure: SelfSimilarMeasure
    coefficients: FormCoefficients
    shift: float = 0.0

    @property
    def n(self):
        return self.masses.size

    @cached_property
    def mass(self):
        return sp.diags(self.masses).tocsr()

    def Q(self, f, g=None):
        """``Q(f, g)``; with ``g`` omitted returns the quadratic form ``Q(f)``."""
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(g @ (self.stiffness @ f))

    def l2(self, f, g=None):
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(np.sum(f * g * self.masses))

    def energy(self, f):
        return self.graph.energy(f)

    @cached_property
    def diagnostics(self):
        return diagnostics(self, self.coefficients.M, raise_infeasible=False)

    def shifted(self, alpha):
        """Same form with ``c`` replaced by ``c - alpha`` (matrix ``A + alpha M``)."""
        return replace(self, stiffness=add_alpha(self, alpha), c=self.c - alpha,
                       shift=self.shift + alpha)


def assemble(hs, measure, coefficients, m, vm=None):
    """Assemble the level-m form.

    Parameters
    ----------
    hs : HarmonicStructure
    measure : SelfSimilarMeasure
    coefficients : FormCoefficients
    m : int
    vm : VertexMeasure, optional
        Reuse a precomputed vertex measure.

    Returns
    -------
    AssembledForm

    Raises
    ------
    InfeasibleCoefficientsError
        If ``a`` violates the declared bounds.
    """
    graph = assemble_form(hs, m)
    vm = vm or vertex_measure(hs, measure, m)
    a = vertex_values(coefficients.a, hs, m)
    c = vertex_values(coefficients.c, hs, m)
    lam, Lam = _bounds(coefficients, a)
    if not (a.min() > lam and a.max() < Lam):
        raise InfeasibleCoefficientsError(
            f"coefficient a must satisfy {lam} < a < {Lam}; "
            f"got range [{a.min():.6g}, {a.max():.6g}]",
            {"lam": lam, "Lam": Lam, "a_min": a.min(), "a_max": a.max()},
        )
    b = _edge_field(coefficients.b, hs, m)
    bh = _edge_field(coefficients.b_hat, hs, m)
    d = graph.incidence
    s = graph.averaging
    w = graph.conductance
    a_bar = s @ a
    stiff = (d.T @ sp.diags(w * a_bar) @ d
             - s.T @ sp.diags(w * b.values) @ d
             - d.T @ sp.diags(w * bh.values) @ s
             - sp.diags(c * vm.masses))
    return AssembledForm(
        level=int(m),
        stiffness=sp.csr_matrix(stiff),
        masses=vm.masses,
        graph=graph,
        a=a,
        c=c,
        b=b,
        b_hat=bh,
        hs=hs,
        measure=measure,
        coefficients=coefficients,
    )


def _bounds(coefficients, a):
    lam = coefficients.lam if coefficients.lam is not None else 0.5 * float(a.min())
    Lam = coefficients.Lam if coefficients.Lam is not None else 2.0 * float(a.max())
    if lam <= 0 or Lam <= lam:
        raise InfeasibleCoefficientsError(
            f"need 0 < lam < Lam, got lam={lam}, Lam={Lam}", {"lam": lam, "Lam": Lam})
    return float(lam), float(Lam)


def _hardy(field_, hs, measure, M):
    if field_.is_zero():
        return 0.0, 0.0, None
    est = hardy_bound(field_, hs, measure, M)
    return est.delta, est.gamma, est.n0


def diagnostics(assembled, M=None, raise_infeasible=True, sharp=True):
    """All constants of the two-sided bounds and the sector condition.

    Parameters
    ----------
    assembled : AssembledForm
    M : float, optional
        Hardy parameter.  If omitted and a drift is present, ``M`` is taken
        from ``(16 / lam^2) * 2^k``, ``k = 0..12``, maximizing ``c0`` among
        values with an admissible cell level.  The scan stops once no larger
        ``M`` can beat the best ``c0`` found so far.
    raise_infeasible : bool
        Raise :class:`InfeasibleCoefficientsError` when ``lambda0 <= 0``.
    sharp : bool
        Also report the sharp Hardy ``gamma`` for the chosen ``delta``.

    Returns
    -------
    Diagnostics
    """
    hs, measure = assembled.hs, assembled.measure
    coeffs = assembled.coefficients
    lam, Lam = _bounds(coeffs, assembled.a)
    c = assembled.c
    b, bh = assembled.b, assembled.b_hat
    has_drift = not (b.is_zero() and bh.is_zero())
    notes = []

    if not has_drift:
        candidates = [math.inf if M is None else float(M)]
    elif M is not None:
        candidates = [float(M)]
    else:
        candidates = [16.0 / lam**2 * k for k in M_GRID]

    best = None
    level_error = None
    for cand in candidates:
        if has_drift:
            try:
                db, gb, n0b = _hardy(b, hs, measure, cand)
                dbh, gbh, n0bh = _hardy(bh, hs, measure, cand)
            except HardyLevelError as exc:
                level_error = exc
                continue
        else:
            db = gb = dbh = gbh = 0.0
            n0b = n0bh = None
        consts = form_constants(lam, Lam, db, gb, dbh, gbh, c)
        record = (cand, db, gb, dbh, gbh, n0b, n0bh, consts)
        if best is None or consts[1] > best[-1][1]:
            best = record
        # larger M never lowers gamma and keeps lambda0 below lam / 2
        if has_drift and float(np.min(-c)) - (gb + gbh) / lam <= best[-1][1]:
            break

    if best is None:
        msg = (f"no admissible Hardy cell level at level {assembled.level}: {level_error}")
        if raise_infeasible:
            raise InfeasibleCoefficientsError(
                msg, {"required_level": getattr(level_error, "required_level", None)})
        nan = math.nan
        return Diagnostics(lam, Lam, nan, nan, nan, nan, nan, None, None, -math.inf,
                           -math.inf, math.nan, nan, nan, nan,
                           float(np.max(np.abs(c))),
                           measure.min_cell_mass(assembled.level), notes=(msg,))

    cand, db, gb, dbh, gbh, n0b, n0bh, (lambda0, c0, Linf, cinf, K) = best
    if lambda0 <= 0:
        msg = (f"lambda0 = {lambda0:.4g} <= 0: sqrt(delta(b)) = {math.sqrt(db):.4g}, "
               f"sqrt(delta(b_hat)) = {math.sqrt(dbh):.4g}, lam = {lam:.4g}")
        if raise_infeasible:
            raise InfeasibleCoefficientsError(
                msg, {"delta_b": db, "delta_b_hat": dbh, "lam": lam, "lambda0": lambda0})
        notes.append(msg)
    c1 = 0.0 if c0 > 0 else (-c0 + SHIFT_MARGIN if math.isfinite(c0) else math.nan)
    if c0 <= 0 and math.isfinite(c0):
        notes.append(f"c0 = {c0:.4g} <= 0; shift c1 = {c1:.4g} makes the form coercive")

    g_opt_b = g_opt_bh = math.nan
    if sharp:
        g_opt_b = hardy_optimal(b, db, assembled.masses) if not b.is_zero() else 0.0
        g_opt_bh = hardy_optimal(bh, dbh, assembled.masses) if not bh.is_zero() else 0.0

    return Diagnostics(
        lam=lam, Lam=Lam, M=cand, delta_b=db, gamma_b=gb, delta_b_hat=dbh,
        gamma_b_hat=gbh, n0_b=n0b, n0_b_hat=n0bh, lambda0=lambda0, c0=c0, c1=c1,
        Lambda_inf=Linf, c_inf=cinf, K=K, sup_c=float(np.max(np.abs(c))),
        V_m=measure.min_cell_mass(assembled.level), gamma_opt_b=g_opt_b,
        gamma_opt_b_hat=g_opt_bh, notes=tuple(notes),
    )


def symmetric_part(assembled):
    """Matrix of the symmetrized form ``(Q(f, g) + Q(g, f)) / 2``."""
    a = assembled.stiffness if hasattr(assembled, "stiffness") else assembled
    return ((a + a.T) * 0.5).tocsr()


def add_alpha(assembled, alpha):
    """Matrix of ``Q_alpha = Q + alpha <., .>``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    return (assembled.stiffness + alpha * assembled.mass).tocsr()

