"""Identification operators between ``L^2(X, mu)`` and ``l^2(V_m, mu^(m))``.

Functions on ``X`` are represented as piecewise harmonic at a reference
level ``M*``.  ``Phi_m f(p) = <f, psi_{p,m}> / mu^(m)({p})`` is evaluated
exactly with the consistent mass matrix at level ``M*``, and its adjoint is
the harmonic extension ``ext_m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonic import harmonic_extension
from .measures import gram_matrix, mass_matrix, vertex_measure

__all__ = [
    "IdentificationOperator",
    "phi",
    "ext",
    "ks_strong_error",
    "KSError",
]


class IdentificationOperator:
    """``Phi_m`` and ``ext_m`` for all ``m <= M*`` of one reference level.

    Parameters
    ----------
    hs : HarmonicStructure
    measure : SelfSimilarMeasure
    reference_level : int
        ``M*``.
    """

    def __init__(self, hs, measure, reference_level):
        self.hs = hs
        self.measure = measure
        self.reference_level = int(reference_level)
        self.gram = gram_matrix(hs, measure)
        self._mass = None
        self._vm = {}

    @property
    def mass(self):
        """Consistent mass matrix on ``V_{M*}``."""
        if self._mass is None:
            self._mass = mass_matrix(self.hs, self.measure, self.reference_level, self.gram)
        return self._mass

    def vertex_measure(self, m):
        if m not in self._vm:
            self._vm[m] = vertex_measure(self.hs, self.measure, m)
        return self._vm[m]

    def _check(self, m):
        if not 0 <= m <= self.reference_level:
            raise ValueError(
                f"level {m} must lie between 0 and the reference level {self.reference_level}")

    def phi(self, f, m):
        """``Phi_m f`` for ``f`` given by its values on ``V_{M*}``."""
        self._check(m)
        f = np.asarray(f, dtype=float)
        ext_op = self.hs.extension_operator(m, self.reference_level)
        moments = ext_op.T @ (self.mass @ f)
        masses = self.vertex_measure(m).masses
        return moments / (masses[:, None] if moments.ndim == 2 else masses)

    def ext(self, v, m):
        """Values on ``V_{M*}`` of the m-harmonic extension of ``v``."""
        self._check(m)
        return harmonic_extension(self.hs, v, m, self.reference_level)

    def inner(self, f, g):
        """Exact ``<f, g>_{L^2(mu)}`` of two ``M*``-harmonic functions."""
        return float(np.asarray(g) @ (self.mass @ np.asarray(f)))

    def norm(self, f):
        return float(np.sqrt(max(self.inner(f, f), 0.0)))


def phi(hs, measure, f, reference_level, m):
    """Functional form of :meth:`IdentificationOperator.phi`."""
    return IdentificationOperator(hs, measure, reference_level).phi(f, m)


def ext(hs, v, m, reference_level):
    """Functional form of :meth:`IdentificationOperator.ext`."""
    return harmonic_extension(hs, v, m, reference_level)


@dataclass(frozen=True)
class KSError:
    """Sup-norm and ``l^2(mu^(M*))`` norm of ``ext_m u_m - u_ref``."""

    level: int
    sup: float
    l2: float


def ks_strong_error(hs, measure, u_m, m, u_ref, reference_level, vm_ref=None):
    """Errors of the extended level-m solution against a reference on ``V_{M*}``."""
    if m > reference_level:
        raise ValueError("reference level must not be below the solution level")
    diff = harmonic_extension(hs, u_m, m, reference_level) - np.asarray(u_ref, dtype=float)
    vm_ref = vm_ref or vertex_measure(hs, measure, reference_level)
    return KSError(int(m), float(np.max(np.abs(diff))),
                   float(np.sqrt(np.sum(diff * diff * vm_ref.masses))))
