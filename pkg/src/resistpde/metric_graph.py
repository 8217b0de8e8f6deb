"""Metric-graph (cable system) approximations.

Every edge ``e`` of the level-m graph becomes an interval ``(0, l_e)``
oriented from its head ``i(e)`` to its tail ``j(e)``, carrying the energy
``kappa_e l_e int (f_e')^2`` with ``kappa_e`` the graph conductance.  Edge
interiors are discretized by ``s`` equally spaced nodes, giving continuous
piecewise-linear functions.  With ``s = 0`` everything reduces to the
discrete graph: edge-wise linear functions have exactly the graph energy.

Node numbering: graph vertices first, then the interior nodes of edge ``e``
at ``n_vertices + e * s + k`` for ``k = 0..s-1``, at offset
``(k + 1) l_e / (s + 1)`` from the head.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

from .fields import SymbolicField, VectorField
from .forms import Diagnostics, form_constants, vertex_values
from .harmonic import assemble_form
from .measures import vertex_measure
from . import solvers

__all__ = [
    "MetricGraph",
    "MetricAssembledForm",
    "build_metric_graph",
    "metric_energy",
    "project_edgewise_linear",
    "decay_products_check",
    "metric_measure",
    "assemble_metric",
    "solve_elliptic_metric",
    "solve_parabolic_metric",
    "bump_sup_bound",
]


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Level-m metric graph with ``s`` interior nodes per edge.

    Attributes
    ----------
    graph : GraphForm
        Underlying level-m graph form (edges, conductances, owning cells).
    lengths : ndarray
        Edge lengths ``l_e``.
    subdiv : int
        Interior nodes per edge.
    """

    graph: object
    lengths: np.ndarray
    subdiv: int

    @property
    def level(self):
        return self.graph.level

    @property
    def n_vertices(self):
        return self.graph.n_vertices

    @property
    def n_edges(self):
        return self.graph.n_edges

    @property
    def n_nodes(self):
        return self.n_vertices + self.n_edges * self.subdiv

    @property
    def kappa(self):
        return self.graph.conductance

    @cached_property
    def segments(self):
        """Arrays ``(left, right, edge)`` of all sub-segments in edge order."""
        s, nv, ne = self.subdiv, self.n_vertices, self.n_edges
        chain = np.empty((ne, s + 2), dtype=np.int64)
        chain[:, 0] = self.graph.heads
        chain[:, -1] = self.graph.tails
        if s:
            chain[:, 1:-1] = nv + np.arange(ne)[:, None] * s + np.arange(s)[None, :]
        left = chain[:, :-1].ravel()
        right = chain[:, 1:].ravel()
        edge = np.repeat(np.arange(ne), s + 1)
        return left, right, edge

    @property
    def segment_length(self):
        """Length of each sub-segment, aligned with :attr:`segments`."""
        return np.repeat(self.lengths / (self.subdiv + 1), self.subdiv + 1)

    @cached_property
    def node_edge_offset(self):
        """``(edge_id, offset)`` of every node; vertices get ``(-1, 0)``."""
        s, nv, ne = self.subdiv, self.n_vertices, self.n_edges
        edge = np.concatenate([-np.ones(nv, dtype=np.int64), np.repeat(np.arange(ne), s)])
        frac = np.tile((np.arange(s) + 1.0) / (s + 1.0), ne)
        offset = np.concatenate([np.zeros(nv), frac * np.repeat(self.lengths, s)])
        return edge, offset

    def interpolate(self, vertex_values_):
        """Edge-wise linear extension of vertex values to all nodes."""
        v = np.asarray(vertex_values_, dtype=float)
        if v.shape[0] != self.n_vertices:
            raise ValueError(f"expected {self.n_vertices} vertex values")
        s = self.subdiv
        if s == 0:
            return v.copy()
        frac = (np.arange(s) + 1.0) / (s + 1.0)
        head = v[self.graph.heads]
        tail = v[self.graph.tails]
        inner = head[:, None] * (1 - frac)[None, :] + tail[:, None] * frac[None, :]
        return np.concatenate([v, inner.ravel()])

    @cached_property
    def gradient_matrix(self):
        """Sparse ``D`` with ``(D f)_k`` the slope of ``f`` on sub-segment ``k``."""
        left, right, _ = self.segments
        h = self.segment_length
        k = np.arange(left.size)
        return sp.csr_matrix(
            (np.concatenate([1.0 / h, -1.0 / h]),
             (np.concatenate([k, k]), np.concatenate([right, left]))),
            shape=(left.size, self.n_nodes))

    @cached_property
    def midpoint_matrix(self):
        """Sparse ``S`` with ``(S f)_k`` the value of ``f`` at the midpoint of segment ``k``."""
        left, right, _ = self.segments
        k = np.arange(left.size)
        return sp.csr_matrix(
            (np.full(2 * k.size, 0.5), (np.concatenate([k, k]), np.concatenate([left, right]))),
            shape=(left.size, self.n_nodes))

    @cached_property
    def segment_weight(self):
        """``kappa_e l_e h_k``: weight of a segment in the edge inner product."""
        _, _, edge = self.segments
        return self.kappa[edge] * self.lengths[edge] * self.segment_length

    @cached_property
    def stiffness(self):
        """Energy matrix of ``E_Gamma``."""
        d = self.gradient_matrix
        return (d.T @ sp.diags(self.segment_weight) @ d).tocsr()


def build_metric_graph(form, lengths="unit", subdiv=1, rho=None):
    """Metric graph over a level form.

    Parameters
    ----------
    form : GraphForm
    lengths : {"unit", "geometric"} or array_like
        ``unit`` gives ``l_e = 1``; ``geometric`` gives ``l_e = rho**m``;
        an array gives explicit positive lengths.
    subdiv : int
        Interior nodes per edge (``0`` reproduces the graph).
    rho : float, optional
        Ratio for the geometric rule.
    """
    if subdiv < 0:
        raise ValueError("subdiv must be nonnegative")
    if isinstance(lengths, str):
        if lengths == "unit":
            arr = np.ones(form.n_edges)
        elif lengths == "geometric":
            if rho is None or rho <= 0:
                raise ValueError("geometric lengths need rho > 0")
            arr = np.full(form.n_edges, float(rho) ** form.level)
        else:
            raise ValueError(f"unknown length rule {lengths!r}")
    else:
        arr = np.asarray(lengths, dtype=float)
        if arr.shape != (form.n_edges,):
            raise ValueError("one length per edge is required")
    if np.any(arr <= 0):
        raise ValueError("edge lengths must be positive")
    return MetricGraph(form, arr, int(subdiv))


def metric_energy(mg, f):
    """``E_Gamma(f)`` of a continuous piecewise-linear node function."""
    f = np.asarray(f, dtype=float)
    slopes = mg.gradient_matrix @ f
    return float(np.sum(mg.segment_weight * slopes**2))


def project_edgewise_linear(mg, f):
    """Replace interior node values by the chord between the edge endpoints."""
    f = np.asarray(f, dtype=float)
    return mg.interpolate(f[: mg.n_vertices])


def bump_sup_bound(mg, f):
    """Sup norm of ``f`` and the bound ``(max_e 1/kappa_e * E_Gamma(f))^(1/2)``.

    For ``f`` vanishing on the vertices, each edge satisfies
    ``f(s)^2 <= l_e E_e(f_e) <= E_Gamma(f) / kappa_e``.
    """
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(f))), math.sqrt(metric_energy(mg, f) / mg.kappa.min())


_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(4)


def decay_products_check(mg, f, g):
    """Both sides of the product decay identity for edge-wise linear ``f, g``.

    Returns
    -------
    direct : float
        ``E_Gamma(fg - H(fg))`` by Gauss quadrature of the exact quadratic
        products on each edge.
    closed : float
        ``(1/3) sum_e kappa_e l_e^4 (f_e' g_e')^2``.
    """
    f = np.asarray(f, dtype=float)[: mg.n_vertices]
    g = np.asarray(g, dtype=float)[: mg.n_vertices]
    heads, tails = mg.graph.heads, mg.graph.tails
    lengths, kappa = mg.lengths, mg.kappa
    fs = (f[tails] - f[heads]) / lengths
    gs = (g[tails] - g[heads]) / lengths
    closed = float(np.sum(kappa * lengths**4 * (fs * gs) ** 2) / 3.0)

    # direct: d/dt [f g - chord(f g)] sampled at Gauss nodes on (0, l_e)
    t = 0.5 * (_GAUSS_T[None, :] + 1.0) * lengths[:, None]
    fv = f[heads][:, None] + fs[:, None] * t
    gv = g[heads][:, None] + gs[:, None] * t
    prod_slope = fs[:, None] * gv + gs[:, None] * fv
    chord_slope = ((f[tails] * g[tails] - f[heads] * g[heads]) / lengths)[:, None]
    integrand = (prod_slope - chord_slope) ** 2
    per_edge = 0.5 * lengths * (integrand @ _GAUSS_W)
    direct = float(np.sum(kappa * lengths * per_edge))
    return direct, closed


def metric_measure(mg, vm):
    """Edge masses ``mu(i)/deg(i) + mu(j)/deg(j)`` (constant density per edge)."""
    deg = mg.graph.degree
    heads, tails = mg.graph.heads, mg.graph.tails
    return vm.masses[heads] / deg[heads] + vm.masses[tails] / deg[tails]


@dataclass(frozen=True, eq=False)
class MetricAssembledForm:
    """Metric-graph counterpart of :class:`~resistpde.forms.AssembledForm`."""

    metric: MetricGraph
    stiffness: sp.csr_matrix
    masses: np.ndarray
    c: np.ndarray
    a: np.ndarray
    has_drift: bool
    lam: float
    Lam: float
    shift: float = 0.0

    @property
    def level(self):
        return self.metric.level

    @property
    def n(self):
        return self.masses.size

    @cached_property
    def mass(self):
        return sp.diags(self.masses).tocsr()

    def Q(self, f, g=None):
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(g @ (self.stiffness @ f))

    def l2(self, f, g=None):
        f = np.asarray(f, dtype=float)
        g = f if g is None else np.asarray(g, dtype=float)
        return float(np.sum(f * g * self.masses))

    def energy(self, f):
        return metric_energy(self.metric, f)

    @cached_property
    def diagnostics(self):
        """Closed-form constants; drift-free forms only.

        Hardy constants for metric graphs are not computed, so with a drift
        the record reports ``lambda0 = nan`` and is never feasible.
        """
        if self.has_drift:
            nan = math.nan
            return Diagnostics(self.lam, self.Lam, nan, nan, nan, nan, nan, None, None,
                               nan, nan, nan, nan, nan, nan,
                               float(np.max(np.abs(self.c))), nan,
                               notes=("no Hardy estimate for metric-graph drifts",))
        lambda0, c0, linf, cinf, k = form_constants(self.lam, self.Lam, 0, 0, 0, 0, self.c)
        c1 = 0.0 if c0 > 0 else -c0 + 0.1
        return Diagnostics(self.lam, self.Lam, math.inf, 0.0, 0.0, 0.0, 0.0, None, None,
                           lambda0, c0, c1, linf, cinf, k, float(np.max(np.abs(self.c))),
                           math.nan)

    def shifted(self, alpha):
        return replace(self, stiffness=(self.stiffness + alpha * self.mass).tocsr(),
                       c=self.c - alpha, shift=self.shift + alpha)


def _segment_drift(mg, b, hs):
    """Per-segment drift values from a symbolic or graph vector field."""
    if b is None:
        return np.zeros(mg.segments[0].size)
    m = mg.level
    _, _, edge = mg.segments
    if isinstance(b, SymbolicField):
        out = np.zeros(edge.size)
        for g, f in b.terms:
            gv = mg.midpoint_matrix @ mg.interpolate(g.at_level(hs, m))
            fv = mg.gradient_matrix @ mg.interpolate(f.at_level(hs, m))
            out += gv * fv
        return out
    if isinstance(b, VectorField):
        # a graph field v_e corresponds to the constant slope -v_e / l_e
        return (-b.values / mg.lengths)[edge]
    raise TypeError(f"unsupported drift field type {type(b).__name__}")


def assemble_metric(hs, measure, coefficients, m, subdiv=1, lengths="unit", rho=None):
    """Assemble the metric-graph form with ``subdiv`` interior nodes per edge.

    Diffusion and zero-order coefficients are interpolated edge-wise
    linearly from their level-m vertex values and sampled at segment
    midpoints; drift fields are constant per segment.  The mass is lumped:
    each segment carries ``m_e h / l_e`` split evenly between its two nodes.
    """
    graph = assemble_form(hs, m)
    mg = build_metric_graph(graph, lengths=lengths, subdiv=subdiv, rho=rho)
    vm = vertex_measure(hs, measure, m)
    a_v = vertex_values(coefficients.a, hs, m)
    c_v = vertex_values(coefficients.c, hs, m)
    lam = coefficients.lam if coefficients.lam is not None else 0.5 * float(a_v.min())
    Lam = coefficients.Lam if coefficients.Lam is not None else 2.0 * float(a_v.max())
    a_nodes = mg.interpolate(a_v)
    c_nodes = mg.interpolate(c_v)
    left, right, edge = mg.segments
    h = mg.segment_length
    d, s = mg.gradient_matrix, mg.midpoint_matrix
    wt = mg.segment_weight
    a_mid = s @ a_nodes
    b_seg = _segment_drift(mg, coefficients.b, hs)
    bh_seg = _segment_drift(mg, coefficients.b_hat, hs)

    edge_mass = metric_measure(mg, vm)
    seg_mass = edge_mass[edge] * h / mg.lengths[edge]
    masses = (np.bincount(left, weights=0.5 * seg_mass, minlength=mg.n_nodes)
              + np.bincount(right, weights=0.5 * seg_mass, minlength=mg.n_nodes))

    stiff = (d.T @ sp.diags(wt * a_mid) @ d
             - s.T @ sp.diags(wt * b_seg) @ d
             - d.T @ sp.diags(wt * bh_seg) @ s
             - sp.diags(c_nodes * masses))
    has_drift = bool(np.any(b_seg) or np.any(bh_seg))
    return MetricAssembledForm(mg, sp.csr_matrix(stiff), masses, c_nodes, a_nodes,
                               has_drift, float(lam), float(Lam))


def solve_elliptic_metric(mform, f, strict=False, **kwargs):
    """Weak solve on the metric graph; same contract as the graph solver."""
    return solvers.solve_elliptic(mform, f, strict=strict, **kwargs)


def solve_parabolic_metric(mform, u0, t_final, steps, strict=False, **kwargs):
    """Theta-scheme on the metric graph; same contract as the graph solver."""
    return solvers.solve_parabolic(mform, u0, t_final, steps, strict=strict, **kwargs)

