"""Convergence experiments across levels and coefficient sequences.

Three experiment types are provided:

* ``run_varying_space``: solve at levels ``m_lo..m_hi`` with data
  transported by ``Phi_m`` and compare harmonic extensions with a reference
  solution at level ``M*``; optionally with a manufactured piecewise-harmonic
  solution whose errors must vanish to round-off.
* ``run_single_space``: fixed level, coefficients perturbed by ``eta / n``,
  errors against the unperturbed solution.
* ``run_diagonal``: coefficient approximations ``a_n`` crossed with levels.

All randomness is drawn from a seeded generator and the seed is part of the
returned table metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .fields import LevelFunction, SymbolicField
from .forms import FormCoefficients, assemble
from .identification import IdentificationOperator, ks_strong_error
from .metric_graph import assemble_metric
from .harmonic import harmonic_extension
from .solvers import solve_elliptic, solve_parabolic

__all__ = [
    "ExperimentSpec",
    "ConvergenceTable",
    "run_varying_space",
    "run_single_space",
    "run_diagonal",
    "diagnose",
    "decrease_violations",
    "product_data",
]

TABLE_COLUMNS = ("m", "sup_error", "l2_error", "energy_Qm", "lambda0", "c0", "K")


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """Everything needed to run a convergence experiment.

    Parameters
    ----------
    hs : HarmonicStructure
    measure : SelfSimilarMeasure
    coefficients : FormCoefficients
    equation : {"elliptic", "parabolic"}
    data : ndarray, optional
        Right-hand side ``f`` (elliptic) or initial datum (parabolic) as
        values on ``V_{M*}``; defaults to the constant 1.
    levels : tuple of int
        Levels to solve on.
    reference_level : int
        ``M*``.
    t_final, steps, theta : float, int, float
        Parabolic parameters; ``steps`` is per unit time.
    mode : {"graph", "metric"}
    subdiv : int
        Interior nodes per edge in metric mode.
    manufactured : LevelFunction, optional
        n-harmonic target solution; replaces ``data``.
    strict : bool
        Enforce feasible coefficients at every level.
    seed : int
    """

    hs: object
    measure: object
    coefficients: FormCoefficients
    equation: str = "elliptic"
    data: np.ndarray | None = None
    levels: tuple = (2, 3, 4, 5, 6)
    reference_level: int = 8
    t_final: float = 0.5
    steps: int = 200
    theta: float = 1.0
    mode: str = "graph"
    subdiv: int = 1
    manufactured: LevelFunction | None = None
    strict: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.equation not in ("elliptic", "parabolic"):
            raise ValueError("equation must be 'elliptic' or 'parabolic'")
        if self.mode not in ("graph", "metric"):
            raise ValueError("mode must be 'graph' or 'metric'")
        if self.subdiv < 0:
            raise ValueError("subdiv must be nonnegative")


@dataclass
class ConvergenceTable:
    """Rows of an experiment plus metadata echoed into output headers."""

    columns: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        idx = self.columns.index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)


def decrease_violations(errors, slack=1.05):
    """Indices ``k`` with ``errors[k + 1] > slack * errors[k]``."""
    errors = np.asarray(errors, dtype=float)
    return [k for k in range(errors.size - 1) if errors[k + 1] > slack * errors[k]]


def _check_reference(spec):
    if spec.reference_level < max(spec.levels) + 2:
        raise ValueError("the reference level must exceed the finest level by at least 2")


def _level_solve(spec, coeffs, m, data_m, vm=None):
    """Assemble and solve at level m; returns (assembled, vertex solution)."""
    if spec.mode == "metric":
        form = assemble_metric(spec.hs, spec.measure, coeffs, m, subdiv=spec.subdiv)
        data_nodes = form.metric.interpolate(data_m)
    else:
        form = assemble(spec.hs, spec.measure, coeffs, m, vm=vm)
        data_nodes = data_m
    strict = spec.strict and spec.mode == "graph"
    if spec.equation == "elliptic":
        sol = solve_elliptic(form, data_nodes, strict=strict)
        u = sol.u
    else:
        steps = max(1, int(round(spec.steps * spec.t_final)))
        traj = solve_parabolic(form, data_nodes, spec.t_final, steps, theta=spec.theta,
                               strict=strict)
        u = traj.final
    nv = spec.hs.level(m).n_vertices
    # metric mode: edge-wise linear projection keeps the vertex values
    return form, u, u[:nv]


def _manufactured_rhs(form, u_m):
    """``f`` with ``A u = -M f``, so that ``u`` is the exact weak solution."""
    return -(form.stiffness @ u_m) / form.masses


def _row(m, err, form, u):
    d = form.diagnostics
    return (m, err.sup, err.l2, form.Q(u), d.lambda0, d.c0, d.K)


def run_varying_space(spec):
    """Errors of ``ext_m u_m`` against the level ``M*`` reference.

    Returns
    -------
    ConvergenceTable
        Columns ``m, sup_error, l2_error, energy_Qm, lambda0, c0, K``.
    """
    _check_reference(spec)
    hs, ref = spec.hs, spec.reference_level
    ident = IdentificationOperator(hs, spec.measure, ref)
    vm_ref = ident.vertex_measure(ref)
    table = ConvergenceTable(TABLE_COLUMNS, meta=_meta(spec, "varying"))

    if spec.manufactured is not None:
        target = spec.manufactured
        u_ref = target.at_level(hs, ref)
        for m in spec.levels:
            if m < target.level:
                raise ValueError("manufactured solutions need m >= their level")
            u_true = target.at_level(hs, m)
            form = assemble(hs, spec.measure, spec.coefficients, m,
                            vm=ident.vertex_measure(m))
            f_m = _manufactured_rhs(form, u_true)
            sol = solve_elliptic(form, f_m, strict=spec.strict)
            err = ks_strong_error(hs, spec.measure, sol.u, m, u_ref, ref, vm_ref)
            table.rows.append(_row(m, err, form, sol.u))
        return table

    data = np.ones(hs.level(ref).n_vertices) if spec.data is None else np.asarray(spec.data)
    ref_spec = replace(spec, mode="graph")
    _, _, u_ref = _level_solve(ref_spec, spec.coefficients, ref, ident.phi(data, ref),
                               vm=vm_ref)
    for m in spec.levels:
        data_m = ident.phi(data, m)
        form, u_nodes, u_m = _level_solve(spec, spec.coefficients, m, data_m,
                                          vm=ident.vertex_measure(m))
        err = ks_strong_error(hs, spec.measure, u_m, m, u_ref, ref, vm_ref)
        table.rows.append(_row(m, err, form, u_nodes))
    table.meta["non_monotone_steps"] = decrease_violations(table.column("sup_error"), 1.0)
    return table


def _perturbed(coeffs, perturbation, scale):
    """Coefficients ``base + scale * eta`` for each perturbed component."""
    changes = {}
    for key in ("a", "c"):
        eta = perturbation.get(key)
        if eta is not None:
            changes[key] = _add_scalar(getattr(coeffs, key), eta, scale)
    for key in ("b", "b_hat"):
        eta = perturbation.get(key)
        if eta is not None:
            base = getattr(coeffs, key)
            extra = eta.scaled(scale)
            changes[key] = extra if base is None else base + extra
    return replace(coeffs, **changes)


def _add_scalar(base, eta, scale):
    return np.asarray(base, dtype=float) + scale * np.asarray(eta, dtype=float)


def run_single_space(spec, perturbation, ns=(1, 2, 4, 8, 16, 32, 64), amplitude=1e-4):
    """Errors of solutions with coefficients ``base + amplitude * eta / n``.

    Parameters
    ----------
    spec : ExperimentSpec
        ``levels`` must hold the single working level.
    perturbation : dict
        Keys among ``a``, ``c`` (arrays on the working level or scalars) and
        ``b``, ``b_hat`` (:class:`SymbolicField`).
    ns : sequence of int
    amplitude : float

    Returns
    -------
    ConvergenceTable
        Columns ``n, sup_error, l2_error, lambda0, c0, K``.
    """
    if len(spec.levels) != 1:
        raise ValueError("single-space experiments use exactly one level")
    m = spec.levels[0]
    hs = spec.hs
    nv = hs.level(m).n_vertices
    data = np.ones(nv) if spec.data is None else np.asarray(spec.data, dtype=float)
    if data.shape != (nv,):
        raise ValueError(f"single-space data must live on V_{m}")
    base = _vertexwise(spec.coefficients, hs, m)
    pert = {k: (v if isinstance(v, SymbolicField) else _vertex_array(v, hs, m))
            for k, v in perturbation.items()}
    _, _, u_ref = _level_solve(spec, base, m, data)
    vm = assemble(hs, spec.measure, base, m).masses
    table = ConvergenceTable(("n", "sup_error", "l2_error", "lambda0", "c0", "K"),
                             meta=_meta(spec, "single"))
    table.meta["amplitude"] = amplitude
    for n in ns:
        coeffs = _perturbed(base, pert, amplitude / n)
        form, _, u = _level_solve(spec, coeffs, m, data)
        diff = u - u_ref
        d = form.diagnostics
        table.rows.append((n, float(np.max(np.abs(diff))),
                           float(np.sqrt(np.sum(diff * diff * vm))), d.lambda0, d.c0, d.K))
    sup = table.column("sup_error")
    table.meta["C"] = float(np.max(sup * np.asarray(ns, dtype=float)))
    table.meta["non_monotone_steps"] = decrease_violations(sup, 1.0)
    return table


def _vertex_array(value, hs, m):
    if isinstance(value, LevelFunction):
        return value.at_level(hs, m)
    arr = np.asarray(value, dtype=float)
    return np.full(hs.level(m).n_vertices, float(arr)) if arr.ndim == 0 else arr


def _vertexwise(coeffs, hs, m):
    return replace(coeffs, a=_vertex_array(coeffs.a, hs, m), c=_vertex_array(coeffs.c, hs, m))


def run_diagonal(spec, a_target, ns=(0, 1, 2)):
    """Grid of errors for ``a_n = H_n a`` crossed with the levels of ``spec``.

    Parameters
    ----------
    spec : ExperimentSpec
        The reference solve uses ``a_target`` itself at level ``M*``.
    a_target : ndarray
        Values of ``a`` on ``V_{M*}``.
    ns : sequence of int
        Levels of the harmonic approximations ``a_n``.

    Returns
    -------
    ConvergenceTable
        Columns ``n, m, sup_error, l2_error``; ``meta["best_diagonal"]`` holds
        the smallest error over cells with ``n <= m``.
    """
    _check_reference(spec)
    hs, ref = spec.hs, spec.reference_level
    a_target = np.asarray(a_target, dtype=float)
    ident = IdentificationOperator(hs, spec.measure, ref)
    vm_ref = ident.vertex_measure(ref)
    data = np.ones(hs.level(ref).n_vertices) if spec.data is None else np.asarray(spec.data)
    ref_coeffs = replace(spec.coefficients, a=a_target)
    _, _, u_ref = _level_solve(replace(spec, mode="graph"), ref_coeffs, ref,
                               ident.phi(data, ref), vm=vm_ref)
    table = ConvergenceTable(("n", "m", "sup_error", "l2_error"), meta=_meta(spec, "diagonal"))
    best = math.inf
    for n in sorted(ns):
        a_n = LevelFunction(a_target[: hs.level(n).n_vertices], n)
        coeffs = replace(spec.coefficients, a=a_n)
        for m in sorted(spec.levels):
            if m < n:
                continue
            _, _, u_m = _level_solve(spec, coeffs, m, ident.phi(data, m),
                                     vm=ident.vertex_measure(m))
            err = ks_strong_error(hs, spec.measure, u_m, m, u_ref, ref, vm_ref)
            table.rows.append((n, m, err.sup, err.l2))
            best = min(best, err.sup)
    table.meta["best_diagonal"] = best
    table.meta["diagonal"] = [row[2] for row in table.rows if row[0] == row[1]]
    return table


def diagnose(hs, measure, coefficients, m):
    """Diagnostics record plus cell diameters and ``V(m)`` for one level."""
    form = assemble(hs, measure, coefficients, m)
    d = form.diagnostics
    out = d.as_dict()
    out["level"] = m
    out["V(m)"] = measure.min_cell_mass(m)
    out["max_cell_diameter"] = hs.max_cell_diameter(m)
    out["notes"] = list(d.notes)
    return out


def _meta(spec, mode):
    return {
        "structure": spec.hs.structure.name,
        "mode": mode,
        "discretization": spec.mode,
        "equation": spec.equation,
        "reference_level": spec.reference_level,
        "levels": list(spec.levels),
        "seed": spec.seed,
        "measure": [float(w) for w in spec.measure.weights],
    }


def product_data(hs, level, values_a, values_b, level_ab=0):
    """Pointwise product of two harmonic extensions, as values on ``V_level``."""
    fa = harmonic_extension(hs, np.asarray(values_a, dtype=float), level_ab, level)
    fb = harmonic_extension(hs, np.asarray(values_b, dtype=float), level_ab, level)
    return fa * fb

