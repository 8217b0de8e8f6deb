"""Elliptic and parabolic solves for assembled sectorial forms.

Weak solutions satisfy ``Q(u, e_p) = -<f, e_p>`` for every vertex ``p``,
which with the orientation ``A[i, j] = Q(e_j, e_i)`` is the linear system
``A u = -M f``.  Feasible solves check the a priori energy bound at run
time and raise when it fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import BoundViolationError, ConvergenceError, InfeasibleCoefficientsError

__all__ = [
    "EllipticSolution",
    "ParabolicTrajectory",
    "solve_elliptic",
    "solve_parabolic",
    "green_apply",
    "resolvent_apply",
    "factorize",
    "DENSE_LIMIT",
]

DENSE_LIMIT = 3000
KRYLOV_RTOL = 1e-12
BOUND_SLACK = 1e-9


def factorize(matrix, method="auto"):
    """Return a callable solving ``matrix x = rhs``.

    Parameters
    ----------
    matrix : sparse matrix
    method : {"auto", "dense", "splu", "bicgstab"}
        ``auto`` uses dense LU up to ``DENSE_LIMIT`` unknowns and sparse LU
        above.  ``bicgstab`` is Jacobi-preconditioned with relative tolerance
        ``1e-12``.
    """
    n = matrix.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "splu"
    if method == "dense":
        lu = sla.lu_factor(matrix.toarray() if sp.issparse(matrix) else matrix)
        return lambda rhs: sla.lu_solve(lu, rhs)
    if method == "splu":
        lu = spla.splu(sp.csc_matrix(matrix))
        return lu.solve
    if method == "bicgstab":
        mat = sp.csr_matrix(matrix)
        diag = mat.diagonal()
        if np.any(diag == 0):
            raise ValueError("Jacobi preconditioning needs a nonzero diagonal")
        precond = spla.LinearOperator(mat.shape, matvec=lambda x: x / diag)

        def solve(rhs):
            rhs = np.asarray(rhs, dtype=float)
            if rhs.ndim == 2:
                return np.column_stack([solve(col) for col in rhs.T])
            x, info = spla.bicgstab(mat, rhs, rtol=KRYLOV_RTOL, atol=0.0,
                                    M=precond, maxiter=20 * n)
            if info != 0:
                raise ConvergenceError(f"bicgstab stopped with info={info}")
            return x

        return solve
    raise ValueError(f"unknown solver method {method!r}")


@dataclass(frozen=True, eq=False)
class EllipticSolution:
    """Weak solution of ``L^Q u = f`` at one level.

    Attributes
    ----------
    level : int
    u : ndarray
    residual : float
        ``max_p |Q(u, e_p) + <f, e_p>|``.
    diagnostics : Diagnostics
    bound_ratio : float
        ``Q_1(u) / ((2/c0 + 4/c0^2) ||f||^2)``; ``nan`` when not feasible.
    shift : float
        Shift ``c1`` applied to the form (0 when none).
    """

    level: int
    u: np.ndarray
    residual: float
    diagnostics: object
    bound_ratio: float
    shift: float = 0.0


def _prepare(assembled, strict, shift):
    diag = assembled.diagnostics
    if diag.feasible:
        return assembled, diag
    if shift and diag.lambda0 > 0 and math.isfinite(diag.c1):
        shifted = assembled.shifted(diag.c1)
        return shifted, shifted.diagnostics
    if strict:
        raise InfeasibleCoefficientsError(
            "coefficients are not feasible (lambda0 = {:.4g}, c0 = {:.4g}); pass "
            "shift=True to solve the shifted problem or strict=False to skip the "
            "a priori checks".format(diag.lambda0, diag.c0),
            {"lambda0": diag.lambda0, "c0": diag.c0, "c1": diag.c1},
        )
    return assembled, diag


def _weak_residual(assembled, u, f):
    return float(np.max(np.abs(assembled.stiffness @ u + assembled.masses * f)))


def solve_elliptic(assembled, f, method="auto", strict=True, shift=False,
                   check_bound=True):
    """Weak solution ``u`` with ``Q(u, g) = -<f, g>`` for all ``g``.

    Parameters
    ----------
    assembled : AssembledForm
    f : array_like
        Right-hand side on ``V_m``.
    method : str
        Linear solver, see :func:`factorize`.
    strict : bool
        Refuse infeasible coefficients.  With ``strict=False`` the system is
        solved anyway and no bound is checked.
    shift : bool
        For ``c0 <= 0`` solve the shifted problem ``Q + c1 <., .>`` instead.
    check_bound : bool
        Assert ``Q_1(u) <= (2/c0 + 4/c0^2) ||f||^2`` on feasible solves.

    Returns
    -------
    EllipticSolution

    Raises
    ------
    InfeasibleCoefficientsError
        Infeasible coefficients with ``strict=True`` and no shift.
    BoundViolationError
        The energy bound fails on a feasible solve.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (assembled.n,):
        raise ValueError(f"right-hand side needs {assembled.n} values, got {f.shape}")
    form, diag = _prepare(assembled, strict, shift)
    u = factorize(form.stiffness, method)(-form.masses * f)
    residual = _weak_residual(form, u, f)
    ratio = math.nan
    if diag.feasible:
        f_sq = form.l2(f)
        q1 = form.Q(u) + form.l2(u)
        bound = (2.0 / diag.c0 + 4.0 / diag.c0**2) * f_sq
        ratio = q1 / bound if bound > 0 else (0.0 if q1 <= BOUND_SLACK else math.inf)
        if check_bound and q1 > bound * (1.0 + BOUND_SLACK) + BOUND_SLACK * 1e-3:
            raise BoundViolationError(
                f"energy bound violated: Q_1(u) = {q1:.6g} > {bound:.6g}")
    return EllipticSolution(form.level, u, residual, diag, ratio, form.shift)


def green_apply(assembled, f, method="auto"):
    """``G f`` with ``Q(G f, g) = <f, g>``, i.e. ``-solve_elliptic(f)``."""
    f = np.asarray(f, dtype=float)
    return factorize(assembled.stiffness, method)(assembled.masses * f)


def resolvent_apply(assembled, alpha, f, method="auto"):
    """Solve ``(alpha M + A) u = M f``."""
    f = np.asarray(f, dtype=float)
    mat = assembled.stiffness + alpha * assembled.mass
    return factorize(mat, method)(assembled.masses * f)


@dataclass(frozen=True, eq=False)
class ParabolicTrajectory:
    """Snapshots of the theta-scheme for ``M u' = -A u``.

    Attributes
    ----------
    times : ndarray, shape (k + 1,)
    values : ndarray, shape (k + 1, n)
    theta, dt : float
        Scheme parameter and accepted step size.
    steps : int
        Accepted number of steps.
    refinements : list of (steps, change)
        Richardson history; ``change`` is the max-norm difference of
        ``u(T)`` against the previous (coarser) run.
    smoothing : ndarray
        ``t Q_1(u(t)) / ||u0||^2`` per snapshot (0 at ``t = 0``).
    norms : ndarray
        ``||u(t)||`` per snapshot.
    """

    times: np.ndarray
    values: np.ndarray
    theta: float
    dt: float
    steps: int
    refinements: list = field(default_factory=list)
    smoothing: np.ndarray | None = None
    norms: np.ndarray | None = None
    diagnostics: object = None
    shift: float = 0.0

    @property
    def final(self):
        return self.values[-1]


def _theta_run(form, u0, t_final, steps, theta, method, check_contraction, stride):
    dt = t_final / steps
    lhs = (form.mass + theta * dt * form.stiffness).tocsr()
    rhs_mat = (form.mass - (1.0 - theta) * dt * form.stiffness).tocsr()
    solve = factorize(lhs, method)
    u = u0.copy()
    snaps = [u.copy()]
    prev_norm = math.sqrt(form.l2(u))
    for k in range(1, steps + 1):
        u = solve(rhs_mat @ u)
        if check_contraction:
            norm = math.sqrt(form.l2(u))
            if norm > prev_norm * (1.0 + 1e-12) + 1e-300:
                raise BoundViolationError(
                    f"implicit Euler step {k} expanded the L2 norm: {norm:.6g} > {prev_norm:.6g}")
            prev_norm = norm
        if k % stride == 0:
            snaps.append(u.copy())
    return np.array(snaps), dt


def solve_parabolic(assembled, u0, t_final, steps, theta=1.0, richardson_tol=None,
                    max_refinements=8, method="auto", strict=True, shift=False):
    """Theta-scheme ``(M + theta dt A) u_{k+1} = (M - (1 - theta) dt A) u_k``.

    Parameters
    ----------
    assembled : AssembledForm
    u0 : array_like
        Initial datum on ``V_m``.
    t_final : float
    steps : int
        Initial number of steps; snapshots are kept on this grid.
    theta : float
        In ``[1/2, 1]``; 1 is implicit Euler, 1/2 Crank-Nicolson.
    richardson_tol : float, optional
        If given, the step count is doubled until ``u(T)`` changes by less
        than this in max norm.
    max_refinements : int
    method, strict, shift
        As in :func:`solve_elliptic`.

    Returns
    -------
    ParabolicTrajectory

    Raises
    ------
    ConvergenceError
        Richardson refinement did not reach ``richardson_tol``.
    BoundViolationError
        A feasible implicit Euler step increased the L2 norm.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValueError("theta must lie in [1/2, 1]")
    if t_final <= 0 or steps < 1:
        raise ValueError("need t_final > 0 and steps >= 1")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (assembled.n,):
        raise ValueError(f"initial datum needs {assembled.n} values")
    form, diag = _prepare(assembled, strict, shift)
    contraction = diag.feasible and theta == 1.0

    snaps, dt = _theta_run(form, u0, t_final, steps, theta, method, contraction, 1)
    history = [(steps, math.nan)]
    accepted_steps = steps
    if richardson_tol is not None:
        stride = 1
        for _ in range(max_refinements):
            stride *= 2
            fine, fine_dt = _theta_run(form, u0, t_final, steps * stride, theta, method,
                                       contraction, stride)
            change = float(np.max(np.abs(fine[-1] - snaps[-1])))
            history.append((steps * stride, change))
            snaps, dt, accepted_steps = fine, fine_dt, steps * stride
            if change < richardson_tol:
                break
        else:
            raise ConvergenceError(
                f"Richardson refinement stalled at change {history[-1][1]:.3e}")

    times = np.linspace(0.0, t_final, steps + 1)
    norms = np.sqrt(np.einsum("ij,ij,j->i", snaps, snaps, form.masses))
    u0_sq = norms[0] ** 2
    q1 = np.einsum("ij,ij->i", snaps, (form.stiffness @ snaps.T).T) + norms**2
    smoothing = times * q1 / u0_sq if u0_sq > 0 else np.zeros_like(times)
    return ParabolicTrajectory(times, snaps, float(theta), dt, accepted_steps, history,
                               smoothing, norms, diag, form.shift)
