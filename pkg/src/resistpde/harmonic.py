"""Regular harmonic structures and level-m graph energy forms.

A harmonic structure is a pair of base conductances on ``V_0`` and
renormalization weights ``r_j``.  The level-m form is assembled cell by cell,
each level-m cell ``w`` contributing ``r_w^{-1}`` times the base form on its
boundary vertices.  Harmonic extension uses the level-one extension matrices
``A_j`` recursively, so extending to level m costs ``O(|V_m|)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .cells import SelfSimilarStructure, build_vertices, preset_structure
from .exceptions import StructureError

__all__ = [
    "HarmonicStructure",
    "GraphForm",
    "assemble_form",
    "trace_form",
    "resistance",
    "resistance_matrix",
    "harmonic_extension",
    "project_Hm",
    "energy_measure",
    "cell_diameter",
    "cell_diameters",
    "preset_harmonic_structure",
    "schur_complement",
]

STRUCTURE_TOL = 1e-10


def schur_complement(matrix, keep):
    """Schur complement of a symmetric matrix onto the index set ``keep``.

    Parameters
    ----------
    matrix : array_like or sparse matrix, shape (n, n)
    keep : array_like of int

    Returns
    -------
    ndarray, shape (len(keep), len(keep))
    """
    n = matrix.shape[0]
    keep = np.asarray(keep, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[keep] = False
    drop = np.flatnonzero(mask)
    if sp.issparse(matrix):
        mat = sp.csc_matrix(matrix)
        kk = mat[keep][:, keep].toarray()
        if drop.size == 0:
            return kk
        kd = mat[keep][:, drop]
        dd = mat[drop][:, drop]
        solved = spla.splu(sp.csc_matrix(dd)).solve(kd.T.toarray())
        return kk - kd @ solved
    mat = np.asarray(matrix, dtype=float)
    kk = mat[np.ix_(keep, keep)]
    if drop.size == 0:
        return kk.copy()
    kd = mat[np.ix_(keep, drop)]
    dd = mat[np.ix_(drop, drop)]
    return kk - kd @ np.linalg.solve(dd, kd.T)


@dataclass(frozen=True, eq=False)
class GraphForm:
    """Weighted-graph Dirichlet form ``E(u) = sum_e c_e (u(p) - u(q))^2``.

    Edges are stored once with ``heads < tails``; the gradient of ``f`` on
    edge ``e`` is ``f(heads[e]) - f(tails[e])``.

    Attributes
    ----------
    n_vertices : int
    heads, tails : ndarray of int
    conductance : ndarray of float
    owner : ndarray of int
        Level-m cell that contributed the edge (``-1`` for traced forms).
    level : int or None
        Level of the form, ``None`` for traces onto arbitrary subsets.
    hs : HarmonicStructure or None
    labels : ndarray of int or None
        For traces: the vertex ids of the parent form kept by the trace.
    """

    n_vertices: int
    heads: np.ndarray
    tails: np.ndarray
    conductance: np.ndarray
    owner: np.ndarray
    level: int | None = None
    hs: "HarmonicStructure | None" = None
    labels: np.ndarray | None = None

    @property
    def n_edges(self):
        return self.heads.size

    @cached_property
    def incidence(self):
        """Signed incidence ``D`` with ``(D f)_e = f(head) - f(tail)``."""
        ne = self.n_edges
        rows = np.concatenate([np.arange(ne), np.arange(ne)])
        cols = np.concatenate([self.heads, self.tails])
        vals = np.concatenate([np.ones(ne), -np.ones(ne)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(ne, self.n_vertices))

    @cached_property
    def averaging(self):
        """Edge averaging ``S`` with ``(S g)_e = (g(head) + g(tail)) / 2``."""
        return abs(self.incidence) * 0.5

    @cached_property
    def laplacian(self):
        """Sparse matrix ``L`` with ``E(u, v) = v^T L u``."""
        d = self.incidence
        return (d.T @ sp.diags(self.conductance) @ d).tocsr()

    @cached_property
    def degree(self):
        """Number of incident edges at each vertex."""
        return np.bincount(np.concatenate([self.heads, self.tails]),
                           minlength=self.n_vertices)

    @property
    def table(self):
        if self.hs is None or self.level is None:
            return None
        return build_vertices(self.hs.structure, self.level)

    def energy(self, u, v=None):
        """Energy ``E(u)`` or bilinear ``E(u, v)``."""
        u = np.asarray(u, dtype=float)
        du = self.incidence @ u
        dv = du if v is None else self.incidence @ np.asarray(v, dtype=float)
        return float(np.sum(self.conductance * du * dv))

    def conductance_matrix(self):
        """Dense symmetric matrix of conductances (parallel edges summed)."""
        c = np.zeros((self.n_vertices, self.n_vertices))
        np.add.at(c, (self.heads, self.tails), self.conductance)
        return c + c.T

    def edge_rows(self):
        """Rows ``(p, q, conductance)`` for export."""
        for p, q, c in zip(self.heads, self.tails, self.conductance):
            yield int(p), int(q), float(c)

    @classmethod
    def from_conductances(cls, cond, labels=None, tol=0.0):
        """Form from a dense symmetric conductance matrix."""
        cond = np.asarray(cond, dtype=float)
        iu, ju = np.triu_indices(cond.shape[0], k=1)
        vals = cond[iu, ju]
        keep = vals > tol
        return cls(
            n_vertices=cond.shape[0],
            heads=iu[keep],
            tails=ju[keep],
            conductance=vals[keep],
            owner=-np.ones(int(keep.sum()), dtype=np.int64),
            labels=None if labels is None else np.asarray(labels),
        )


class HarmonicStructure:
    """Regular harmonic structure on a self-similar cell structure.

    Parameters
    ----------
    structure : SelfSimilarStructure
    conductances : array_like, shape (|V_0|, |V_0|)
        Symmetric, nonnegative, zero diagonal base conductances.
    renormalization : float or array_like, shape (N,)
        Weights ``r_j`` in ``(0, 1)``.
    check : bool
        Verify the trace compatibility (fixed point) to ``1e-10``.
    """

    def __init__(self, structure, conductances, renormalization, check=True):
        if not isinstance(structure, SelfSimilarStructure):
            raise TypeError("structure must be a SelfSimilarStructure")
        nb, n = structure.boundary_size, structure.alphabet_size
        c0 = np.array(conductances, dtype=float)
        if c0.shape != (nb, nb):
            raise StructureError(f"base conductances must have shape ({nb}, {nb})")
        if not np.allclose(c0, c0.T, atol=0, rtol=0) or np.any(np.diag(c0) != 0):
            raise StructureError("base conductances must be symmetric with zero diagonal")
        if np.any(c0 < 0):
            raise StructureError("base conductances must be nonnegative")
        if nb > 1:
            ncomp, _ = connected_components(sp.csr_matrix(c0 > 0), directed=False)
            if ncomp != 1:
                raise StructureError("base graph on V_0 is not connected")
        r = np.broadcast_to(np.asarray(renormalization, dtype=float), (n,)).copy()
        if np.any(r <= 0) or np.any(r >= 1):
            raise StructureError("renormalization weights must lie in (0, 1)")
        self.structure = structure
        self.conductances = c0
        self.renormalization = r
        self._forms = {}
        self._prolongations = {}
        self._extensions = {}
        self._diameters = {}
        if check:
            err = self.compatibility_error()
            if err > STRUCTURE_TOL:
                raise StructureError(
                    f"trace of the level-1 form differs from the base form by {err:.3e}"
                )

    def __repr__(self):
        return (f"HarmonicStructure({self.structure.name!r}, "
                f"r={self.renormalization.tolist()})")

    @property
    def n_maps(self):
        return self.structure.alphabet_size

    @property
    def n_boundary(self):
        return self.structure.boundary_size

    def level(self, m):
        """Vertex table of level ``m``."""
        return build_vertices(self.structure, m)

    def cell_weights(self, m):
        """``r_w`` for every level-m cell in word order."""
        w = np.ones(1)
        for _ in range(m):
            w = np.kron(w, self.renormalization)
        return w

    def compatibility_error(self):
        """Max entry deviation between trace of level 1 and the base form."""
        form = assemble_form(self, 1)
        traced = trace_form(form, np.arange(self.n_boundary))
        return float(np.max(np.abs(traced.conductance_matrix() - self.conductances)))

    def max_cell_diameter(self, n):
        """``max_w diam_R(X_w)`` over level-n cells."""
        if n not in self._diameters:
            self._diameters[n] = float(cell_diameters(assemble_form(self, n)).max())
        return self._diameters[n]

    @cached_property
    def extension_matrices(self):
        """Array ``A`` of shape ``(N, nb, nb)``; ``A[j]`` maps V_0 values to F_j(V_0)."""
        form = assemble_form(self, 1)
        table = self.level(1)
        lap = form.laplacian.toarray()
        nb = self.n_boundary
        interior = np.arange(nb, table.n_vertices)
        h = np.zeros((table.n_vertices, nb))
        h[:nb] = np.eye(nb)
        if interior.size:
            h[interior] = -np.linalg.solve(lap[np.ix_(interior, interior)],
                                           lap[np.ix_(interior, np.arange(nb))])
        return np.stack([h[table.cell_vertices[j]] for j in range(self.n_maps)])

    def prolongation(self, m):
        """Sparse matrix mapping V_m values to their harmonic extension on V_{m+1}."""
        if m not in self._prolongations:
            coarse = self.level(m)
            fine = self.level(m + 1)
            a = self.extension_matrices
            nb, n = self.n_boundary, self.n_maps
            cells = np.arange(fine.n_cells)
            rows = fine.cell_vertices  # (cells, nb)
            parents = coarse.cell_vertices[cells // n]  # (cells, nb)
            letters = cells % n
            flat_rows = rows.ravel()
            _, first = np.unique(flat_rows, return_index=True)
            cell_idx, alpha = np.divmod(first, nb)
            r = np.repeat(flat_rows[first], nb)
            c = parents[cell_idx].ravel()
            v = a[letters[cell_idx], alpha].ravel()
            mat = sp.csr_matrix((v, (r, c)), shape=(fine.n_vertices, coarse.n_vertices))
            mat.eliminate_zeros()
            self._prolongations[m] = mat
        return self._prolongations[m]

    def extension_operator(self, n, m):
        """Sparse matrix of harmonic extension from V_n to V_m (``m >= n``)."""
        if m < n:
            raise ValueError("target level must not be below the source level")
        key = (n, m)
        if key not in self._extensions:
            size = self.level(n).n_vertices
            op = sp.identity(size, format="csr")
            for k in range(n, m):
                op = (self.prolongation(k) @ op).tocsr()
            self._extensions[key] = op
        return self._extensions[key]


def assemble_form(hs, m):
    """Level-m graph form of a harmonic structure.

    Each level-m cell ``w`` contributes ``r_w^{-1} c(0; alpha, beta)`` on the
    pair of its boundary vertices ``(F_w(q_alpha), F_w(q_beta))``.

    Parameters
    ----------
    hs : HarmonicStructure
    m : int

    Returns
    -------
    GraphForm
    """
    m = int(m)
    if m in hs._forms:
        return hs._forms[m]
    table = hs.level(m)
    inv_r = 1.0 / hs.cell_weights(m)
    a_idx, b_idx = np.triu_indices(hs.n_boundary, k=1)
    base = hs.conductances[a_idx, b_idx]
    nz = base > 0
    a_idx, b_idx, base = a_idx[nz], b_idx[nz], base[nz]
    p = table.cell_vertices[:, a_idx].ravel()
    q = table.cell_vertices[:, b_idx].ravel()
    cond = (inv_r[:, None] * base[None, :]).ravel()
    owner = np.repeat(np.arange(table.n_cells), base.size)
    heads, tails = np.minimum(p, q), np.maximum(p, q)
    form = GraphForm(
        n_vertices=table.n_vertices,
        heads=heads,
        tails=tails,
        conductance=cond,
        owner=owner,
        level=m,
        hs=hs,
    )
    hs._forms[m] = form
    return form


def trace_form(form, vertices):
    """Trace of a graph form onto a vertex subset (Schur complement).

    Parameters
    ----------
    form : GraphForm
    vertices : array_like of int
        Nonempty subset of the form's vertices.

    Returns
    -------
    GraphForm
        Form on ``len(vertices)`` vertices whose ``labels`` are the kept ids.
    """
    vertices = np.asarray(vertices, dtype=np.int64)
    if vertices.size == 0:
        raise ValueError("trace needs a nonempty vertex set")
    if vertices.size != np.unique(vertices).size:
        raise ValueError("trace vertices must be distinct")
    schur = schur_complement(form.laplacian, vertices)
    cond = -schur
    np.fill_diagonal(cond, 0.0)
    cond = 0.5 * (cond + cond.T)
    # round-off may leave tiny negative couplings between non-adjacent vertices
    cond[np.abs(cond) < 1e-14 * max(1.0, np.abs(cond).max())] = 0.0
    return GraphForm.from_conductances(cond, labels=vertices)


class _Grounded:
    """Factorized Laplacian with vertex 0 grounded, for resistance queries."""

    def __init__(self, form):
        lap = form.laplacian.tocsc()
        self.n = form.n_vertices
        ncomp, _ = connected_components(lap, directed=False)
        if ncomp != 1:
            raise ValueError("resistance needs a connected graph")
        self.lu = spla.splu(lap[1:, 1:].tocsc()) if self.n > 1 else None

    def potential(self, rhs):
        rhs = np.atleast_2d(np.asarray(rhs, dtype=float).T).T
        out = np.zeros_like(rhs)
        if self.lu is not None:
            out[1:] = self.lu.solve(np.ascontiguousarray(rhs[1:]))
        return out


def resistance(form, p, q):
    """Effective resistance ``R(p, q) = 1 / min{E(u): u(p) = 0, u(q) = 1}``."""
    p, q = int(p), int(q)
    if p == q:
        return 0.0
    rhs = np.zeros(form.n_vertices)
    rhs[p], rhs[q] = 1.0, -1.0
    pot = _Grounded(form).potential(rhs)[:, 0]
    return float(pot[p] - pot[q])


def resistance_matrix(form, vertices=None):
    """Pairwise effective resistances among ``vertices`` (all by default)."""
    vertices = np.arange(form.n_vertices) if vertices is None else np.asarray(vertices)
    g = _Grounded(form)
    rhs = np.zeros((form.n_vertices, vertices.size))
    rhs[vertices, np.arange(vertices.size)] = 1.0
    green = g.potential(rhs)[vertices]
    d = np.diag(green)
    return d[:, None] + d[None, :] - green - green.T


def harmonic_extension(hs, values, n, m):
    """Energy-minimizing extension of values on ``V_n`` to ``V_m``.

    Parameters
    ----------
    hs : HarmonicStructure
    values : array_like, shape (|V_n|,) or (|V_n|, k)
    n, m : int
        Source and target levels, ``m >= n``.
    """
    values = np.asarray(values, dtype=float)
    size = hs.level(n).n_vertices
    if values.shape[0] != size:
        raise ValueError(f"expected {size} values on V_{n}, got {values.shape[0]}")
    return hs.extension_operator(n, m) @ values


def project_Hm(hs, u, level, n):
    """n-harmonic part ``H_n u`` of a function ``u`` on ``V_level``."""
    if n > level:
        raise ValueError("projection level must not exceed the function level")
    u = np.asarray(u, dtype=float)
    return harmonic_extension(hs, u[: hs.level(n).n_vertices], n, level)


def energy_measure(form, f):
    """Vertex energy measure ``nu_f({p}) = 1/2 sum_q c(p,q) (f(p) - f(q))^2``."""
    df = form.incidence @ np.asarray(f, dtype=float)
    half = 0.5 * form.conductance * df * df
    return (np.bincount(form.heads, weights=half, minlength=form.n_vertices)
            + np.bincount(form.tails, weights=half, minlength=form.n_vertices))


def cell_diameters(form):
    """Resistance diameter of every level-m cell of a level form.

    The diameter of ``X_w`` equals the largest resistance between two of its
    boundary vertices, measured in the global network.
    """
    table = form.table
    if table is None:
        raise ValueError("cell diameters need a level form")
    cv = table.cell_vertices
    nb = cv.shape[1]
    if nb < 2:
        return np.zeros(cv.shape[0])
    ia, ib = np.triu_indices(nb, k=1)
    g = _Grounded(form)
    used = np.unique(cv)
    diam = np.zeros(cv.shape[0])
    if used.size <= 4000:
        rhs = np.zeros((form.n_vertices, used.size))
        rhs[used, np.arange(used.size)] = 1.0
        green_full = g.potential(rhs)
        pos = np.empty(form.n_vertices, dtype=np.int64)
        pos[used] = np.arange(used.size)
        for a, b in zip(ia, ib):
            p, q = cv[:, a], cv[:, b]
            r = (green_full[p, pos[p]] + green_full[q, pos[q]]
                 - green_full[p, pos[q]] - green_full[q, pos[p]])
            diam = np.maximum(diam, r)
        return diam
    chunk = 512
    for a, b in zip(ia, ib):
        p, q = cv[:, a], cv[:, b]
        for start in range(0, p.size, chunk):
            sl = slice(start, start + chunk)
            k = p[sl].size
            rhs = np.zeros((form.n_vertices, k))
            rhs[p[sl], np.arange(k)] += 1.0
            rhs[q[sl], np.arange(k)] -= 1.0
            pot = g.potential(rhs)
            r = pot[p[sl], np.arange(k)] - pot[q[sl], np.arange(k)]
            diam[sl] = np.maximum(diam[sl], r)
    return diam


def cell_diameter(form, cell):
    """Resistance diameter of a single level-m cell (index into word order)."""
    verts = form.table.cell_vertices[int(cell)]
    verts = np.unique(verts)
    if verts.size < 2:
        return 0.0
    return float(resistance_matrix(form, verts).max())


def preset_harmonic_structure(name):
    """Harmonic structure of a built-in preset.

    ``interval``: unit conductance, ``r = (1/2, 1/2)``.
    ``sg``: unit triangle, ``r_j = 3/5``.
    ``vicsek``: unit complete graph on the four corners, ``r_j = 1/3``.
    """
    structure = preset_structure(name)
    nb = structure.boundary_size
    if name == "interval":
        return HarmonicStructure(structure, [[0.0, 1.0], [1.0, 0.0]], 0.5)
    if name == "sg":
        return HarmonicStructure(structure, np.ones((3, 3)) - np.eye(3), 0.6)
    if name == "vicsek":
        return HarmonicStructure(structure, np.ones((nb, nb)) - np.eye(nb), 1.0 / 3.0)
    raise StructureError(f"unknown preset {name!r}")

