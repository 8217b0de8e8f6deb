"""Estimator-style wrappers around assembly and the solvers.

``fit`` assembles the level-m form and factorizes it once; ``transform``
then maps batches of right-hand sides (rows of ``X``, one value per vertex)
to solutions.  Only the parts of the estimator protocol that make sense for
a fixed linear solve are provided: there is no target ``y`` and no
``score``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .forms import FormCoefficients, assemble
from .harmonic import HarmonicStructure, preset_harmonic_structure
from .measures import SelfSimilarMeasure
from .solvers import factorize, solve_elliptic, solve_parabolic

__all__ = ["EllipticSolver", "ParabolicSolver"]


class _FormEstimator(TransformerMixin, BaseEstimator):
    """Shared parameter handling and assembly."""

    def _structure(self):
        if isinstance(self.structure, HarmonicStructure):
            return self.structure
        return preset_harmonic_structure(self.structure)

    def _assemble(self):
        hs = self._structure()
        measure = (SelfSimilarMeasure.uniform(hs.n_maps) if self.measure_weights is None
                   else SelfSimilarMeasure(np.asarray(self.measure_weights, dtype=float)))
        coeffs = FormCoefficients(a=self.a, b=self.b, b_hat=self.b_hat, c=self.c, M=self.M)
        form = assemble(hs, measure, coeffs, int(self.level))
        self.hs_ = hs
        self.measure_ = measure
        self.form_ = form
        self.n_features_in_ = form.n
        return form

    def _rows(self, X):
        check_is_fitted(self, "form_")
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns; the level-{self.level} form has "
                f"{self.n_features_in_} vertices")
        return X


class EllipticSolver(_FormEstimator):
    """Weak solutions of ``L u = f`` for batches of right-hand sides.

    Parameters
    ----------
    structure : str or HarmonicStructure, default="sg"
    level : int, default=4
    a, c : float or LevelFunction
    b, b_hat : SymbolicField or None
    M : float or None
        Hardy parameter override.
    measure_weights : array_like or None
        Self-similar weights; uniform when omitted.
    method : str, default="auto"
        Linear solver, see :func:`resistpde.solvers.factorize`.
    strict : bool, default=True
    shift : bool, default=False

    Attributes
    ----------
    form_ : AssembledForm
    diagnostics_ : Diagnostics
    residuals_ : ndarray
        Weak residuals of the last ``transform`` call.

    Examples
    --------
    >>> import numpy as np
    >>> est = EllipticSolver(structure="interval", level=3, c=-1.0).fit()
    >>> u = est.transform(-np.ones((1, est.n_features_in_)))
    >>> bool(np.allclose(u, 1.0))
    True
    """

    def __init__(self, structure="sg", level=4, a=1.0, b=None, b_hat=None, c=0.0, M=None,
                 measure_weights=None, method="auto", strict=True, shift=False):
        self.structure = structure
        self.level = level
        self.a = a
        self.b = b
        self.b_hat = b_hat
        self.c = c
        self.M = M
        self.measure_weights = measure_weights
        self.method = method
        self.strict = strict
        self.shift = shift

    def fit(self, X=None, y=None):
        """Assemble the form and run the feasibility diagnostics.

        ``X`` and ``y`` are ignored; they exist for pipeline compatibility.
        """
        form = self._assemble()
        # a throwaway solve runs the feasibility checks and picks the shift
        probe = solve_elliptic(form, np.zeros(form.n), method=self.method,
                               strict=self.strict, shift=self.shift)
        self.diagnostics_ = probe.diagnostics
        self.shift_ = probe.shift
        system = form.shifted(probe.shift) if probe.shift else form
        self._system = system
        self._solve = factorize(system.stiffness, self.method)
        return self

    def transform(self, X):
        """Solutions for each row of ``X`` (right-hand sides on ``V_m``)."""
        X = self._rows(X)
        rhs = -(X * self._system.masses).T
        U = np.asarray(self._solve(rhs)).reshape(self.n_features_in_, -1).T
        self.residuals_ = np.max(
            np.abs((self._system.stiffness @ U.T).T + X * self._system.masses), axis=1)
        return U


class ParabolicSolver(_FormEstimator):
    """Final states ``u(T)`` of ``u' = L u`` for batches of initial data.

    Parameters
    ----------
    structure, level, a, b, b_hat, c, M, measure_weights, method, strict, shift
        As in :class:`EllipticSolver`.
    t_final : float, default=1.0
    steps : int, default=100
    theta : float, default=1.0
    richardson_tol : float or None
    """

    def __init__(self, structure="sg", level=4, a=1.0, b=None, b_hat=None, c=0.0, M=None,
                 measure_weights=None, t_final=1.0, steps=100, theta=1.0,
                 richardson_tol=None, method="auto", strict=True, shift=False):
        self.structure = structure
        self.level = level
        self.a = a
        self.b = b
        self.b_hat = b_hat
        self.c = c
        self.M = M
        self.measure_weights = measure_weights
        self.t_final = t_final
        self.steps = steps
        self.theta = theta
        self.richardson_tol = richardson_tol
        self.method = method
        self.strict = strict
        self.shift = shift

    def fit(self, X=None, y=None):
        """Assemble the form; ``X`` and ``y`` are ignored."""
        self._assemble()
        self.diagnostics_ = self.form_.diagnostics
        return self

    def transform(self, X):
        """``u(T)`` for each row of ``X`` (initial data on ``V_m``)."""
        X = self._rows(X)
        out = np.empty_like(X)
        self.trajectories_ = []
        for k, row in enumerate(X):
            traj = solve_parabolic(self.form_, row, self.t_final, self.steps, theta=self.theta,
                                   richardson_tol=self.richardson_tol, method=self.method,
                                   strict=self.strict, shift=self.shift)
            self.trajectories_.append(traj)
            out[k] = traj.final
        return out
