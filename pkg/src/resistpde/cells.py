"""Combinatorial self-similar cell structures.

A structure is described by ``N`` contraction maps acting on a finite
boundary set ``V_0`` together with level-one gluing rules
``F_i(q_alpha) = F_j(q_beta)``.  Everything else (vertex sets ``V_m``, cell
incidence) is derived by pushing these rules through word prefixes.
No coordinates are ever used.

Vertices are addressed by a triple ``(first level, word, alpha)``: the point
``F_word(q_alpha)`` where ``word`` has length ``first level``.  Within one
gluing class the least triple is canonical, and words are encoded as base-N
integers so that equal-length words compare lexicographically.  Vertices are
numbered in canonical order, hence ``V_n`` is a prefix of ``V_m`` for
``n <= m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .exceptions import StructureError

__all__ = [
    "SelfSimilarStructure",
    "LevelTable",
    "Cell",
    "build_vertices",
    "cells_at_level",
    "preset_structure",
    "PRESET_NAMES",
]


@dataclass(frozen=True)
class SelfSimilarStructure:
    """Combinatorial description of a p.c.f. self-similar set.

    Parameters
    ----------
    alphabet_size : int
        Number ``N`` of contraction maps.
    boundary_size : int
        Number of boundary vertices ``|V_0|``.
    gluing : tuple of (i, alpha, j, beta)
        Identifications ``F_i(q_alpha) = F_j(q_beta)`` with ``i != j``.
    fixed_points : tuple of int, optional
        ``fixed_points[alpha]`` is the map whose fixed point is ``q_alpha``.
        Defaults to ``alpha`` itself, which is the convention of all presets.
    name : str
        Label used in output headers.
    """

    alphabet_size: int
    boundary_size: int
    gluing: tuple
    fixed_points: tuple | None = None
    name: str = "custom"

    def __post_init__(self):
        n, nb = int(self.alphabet_size), int(self.boundary_size)
        if n < 1 or nb < 1:
            raise StructureError("alphabet_size and boundary_size must be positive")
        rules = tuple(tuple(int(x) for x in rule) for rule in self.gluing)
        for rule in rules:
            if len(rule) != 4:
                raise StructureError(f"gluing rule {rule} must have four entries")
            i, a, j, b = rule
            if not (0 <= i < n and 0 <= j < n and 0 <= a < nb and 0 <= b < nb):
                raise StructureError(f"gluing rule {rule} out of range")
            if i == j:
                raise StructureError(
                    f"gluing rule {rule} is self-identifying (same map on both sides)"
                )
        fixed = self.fixed_points
        fixed = tuple(range(nb)) if fixed is None else tuple(int(x) for x in fixed)
        if len(fixed) != nb or any(not 0 <= f < n for f in fixed):
            raise StructureError("fixed_points needs one valid map index per boundary vertex")
        if len(set(fixed)) != nb:
            raise StructureError("distinct boundary vertices need distinct fixing maps")
        object.__setattr__(self, "alphabet_size", n)
        object.__setattr__(self, "boundary_size", nb)
        object.__setattr__(self, "gluing", rules)
        object.__setattr__(self, "fixed_points", fixed)
        self._check_level_one()

    def _check_level_one(self):
        n, nb = self.alphabet_size, self.boundary_size
        labels = _glue_labels(n, nb, self.gluing)
        # consistency: two distinct boundary points of one sub-cell never merge
        per_cell = labels.reshape(n, nb)
        for j in range(n):
            if len(set(per_cell[j].tolist())) != nb:
                raise StructureError(
                    f"gluing identifies two boundary vertices of sub-cell {j}"
                )
        # fixed points must not be glued to a different boundary vertex
        corner_labels = [per_cell[f, a] for a, f in enumerate(self.fixed_points)]
        if len(set(corner_labels)) != nb:
            raise StructureError("gluing identifies two boundary vertices of V_0")
        # connectivity of the cell graph (cells adjacent when glued)
        rows, cols = [], []
        for i, _, j, _ in self.gluing:
            rows.append(i)
            cols.append(j)
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise StructureError("level-one cell graph is not connected")


def _glue_labels(n, nb, rules, n_prev=None):
    """Union-find over raw points ``(j, v)`` encoded as ``j * n_prev + v``."""
    n_prev = nb if n_prev is None else n_prev
    size = n * n_prev
    if not rules:
        return np.arange(size)
    rows = [i * n_prev + a for i, a, _, _ in rules]
    cols = [j * n_prev + b for _, _, j, b in rules]
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    _, labels = connected_components(adj, directed=False)
    return labels


@dataclass(frozen=True)
class Cell:
    """A level-m cell ``X_w`` with its boundary vertex indices."""

    index: int
    word: tuple
    vertices: tuple

    @property
    def level(self):
        return len(self.word)

    @property
    def parent(self):
        """Index of the parent cell one level up (``None`` at level 0)."""
        return None if not self.word else self.index // self._n

    _n: int = field(default=1, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class LevelTable:
    """Vertex set ``V_m`` and level-m cell incidence.

    Attributes
    ----------
    structure : SelfSimilarStructure
    level : int
    first_level : ndarray of int
        Length of the canonical word of each vertex.
    word_code : ndarray of int64
        Canonical word as a base-N integer.
    alpha : ndarray of int
        Canonical boundary index.
    cell_vertices : ndarray of shape (N**m, |V_0|)
        ``cell_vertices[c, alpha]`` is the vertex ``F_w(q_alpha)`` of the cell
        with word index ``c`` (base-N digits of ``c``, most significant first).
    """

    structure: SelfSimilarStructure
    level: int
    first_level: np.ndarray
    word_code: np.ndarray
    alpha: np.ndarray
    cell_vertices: np.ndarray

    @property
    def n_vertices(self):
        return len(self.alpha)

    @property
    def n_cells(self):
        return self.cell_vertices.shape[0]

    def word(self, vertex):
        """Canonical word of ``vertex`` as a tuple of letters."""
        return decode_word(int(self.word_code[vertex]), int(self.first_level[vertex]),
                           self.structure.alphabet_size)

    def address(self, vertex):
        """Canonical ``(word, alpha)`` pair of ``vertex``."""
        return self.word(vertex), int(self.alpha[vertex])

    def cell_word(self, cell):
        return decode_word(int(cell), self.level, self.structure.alphabet_size)

    @cached_property
    def incidence(self):
        """Sparse ``(n_vertices, n_cells)`` 0/1 matrix of vertex-cell incidence."""
        nc, nb = self.cell_vertices.shape
        rows = self.cell_vertices.ravel()
        cols = np.repeat(np.arange(nc), nb)
        mat = sp.csr_matrix((np.ones(rows.size), (rows, cols)),
                            shape=(self.n_vertices, nc))
        mat.data[:] = 1.0
        return mat

    def cells_containing(self, vertex):
        """Indices of the level-m cells that contain ``vertex``."""
        inc = self.incidence
        return inc.indices[inc.indptr[vertex]:inc.indptr[vertex + 1]].copy()

    def cells(self):
        """List of :class:`Cell` records for this level."""
        n = self.structure.alphabet_size
        return [
            Cell(c, self.cell_word(c), tuple(int(v) for v in self.cell_vertices[c]), _n=n)
            for c in range(self.n_cells)
        ]

    def vertex_rows(self):
        """Rows ``(vertex_id, level, word, boundary_index)`` for export."""
        sep = "" if self.structure.alphabet_size <= 10 else "."
        for v in range(self.n_vertices):
            word = sep.join(str(x) for x in self.word(v))
            yield v, int(self.first_level[v]), word, int(self.alpha[v])


def decode_word(code, length, n):
    letters = []
    for _ in range(length):
        code, r = divmod(code, n)
        letters.append(r)
    return tuple(reversed(letters))


def encode_word(word, n):
    code = 0
    for letter in word:
        code = code * n + int(letter)
    return code


def _level_zero(structure):
    nb = structure.boundary_size
    return LevelTable(
        structure=structure,
        level=0,
        first_level=np.zeros(nb, dtype=np.int64),
        word_code=np.zeros(nb, dtype=np.int64),
        alpha=np.arange(nb, dtype=np.int64),
        cell_vertices=np.arange(nb, dtype=np.int64)[None, :],
    )


def _refine(structure, prev):
    """Build ``V_m`` from ``V_{m-1}`` by gluing N copies."""
    n = structure.alphabet_size
    n_prev = prev.n_vertices
    labels = _glue_labels(n, structure.boundary_size, structure.gluing, n_prev)

    # candidate canonical address of raw point (j, v): prepend letter j
    j = np.repeat(np.arange(n, dtype=np.int64), n_prev)
    v = np.tile(np.arange(n_prev), n)
    length = prev.first_level[v] + 1
    code = j * (n ** prev.first_level[v]) + prev.word_code[v]
    alpha = prev.alpha[v]
    fixed = np.asarray(structure.fixed_points)
    reduce = (prev.first_level[v] == 0) & (fixed[alpha] == j)
    length = np.where(reduce, 0, length)
    code = np.where(reduce, 0, code)

    # least address per gluing class
    order = np.lexsort((alpha, code, length, labels))
    first = np.ones(order.size, dtype=bool)
    first[1:] = labels[order[1:]] != labels[order[:-1]]
    reps = order[first]
    cls = labels[reps]
    # number classes in canonical order
    canon = np.lexsort((alpha[reps], code[reps], length[reps]))
    rank = np.empty(labels.max() + 1, dtype=np.int64)
    rank[cls[canon]] = np.arange(canon.size)
    vertex_of_raw = rank[labels]

    keep = reps[canon]
    cell_vertices = np.concatenate(
        [vertex_of_raw[jj * n_prev + prev.cell_vertices] for jj in range(n)], axis=0
    )
    return LevelTable(
        structure=structure,
        level=prev.level + 1,
        first_level=length[keep],
        word_code=code[keep],
        alpha=alpha[keep],
        cell_vertices=cell_vertices,
    )


@lru_cache(maxsize=None)
def build_vertices(structure, m):
    """Vertex table ``V_m`` with cell incidence.

    Parameters
    ----------
    structure : SelfSimilarStructure
    m : int
        Level, ``m >= 0``.

    Returns
    -------
    LevelTable
    """
    m = int(m)
    if m < 0:
        raise ValueError("level must be nonnegative")
    if m == 0:
        return _level_zero(structure)
    return _refine(structure, build_vertices(structure, m - 1))


def cells_at_level(structure, m):
    """All ``N**m`` level-m cells as :class:`Cell` records."""
    return build_vertices(structure, m).cells()


_PRESETS = {
    "interval": dict(alphabet_size=2, boundary_size=2, gluing=((0, 1, 1, 0),)),
    "sg": dict(alphabet_size=3, boundary_size=3,
               gluing=((0, 1, 1, 0), (0, 2, 2, 0), (1, 2, 2, 1))),
    "vicsek": dict(alphabet_size=5, boundary_size=4,
                   gluing=((0, 2, 4, 0), (1, 3, 4, 1), (2, 0, 4, 2), (3, 1, 4, 3))),
}
PRESET_NAMES = tuple(_PRESETS)


def preset_structure(name):
    """Cell structure of a built-in preset (``interval``, ``sg`` or ``vicsek``)."""
    try:
        spec = _PRESETS[name]
    except KeyError:
        raise StructureError(f"unknown preset {name!r}; choose from {PRESET_NAMES}") from None
    return SelfSimilarStructure(name=name, **spec)
