import itertools

import numpy as np
import pytest

from resistpde import (
    SelfSimilarStructure,
    StructureError,
    build_vertices,
    cells_at_level,
    preset_structure,
)
from resistpde.cells import decode_word, encode_word


@pytest.mark.parametrize(
    "name, m, expected",
    [("interval", 1, 3), ("interval", 4, 17), ("sg", 0, 3), ("sg", 1, 6), ("sg", 2, 15),
     ("vicsek", 1, 16)],
)
def test_vertex_counts(name, m, expected):
    assert build_vertices(preset_structure(name), m).n_vertices == expected


def test_sg_vertex_recursion_and_level_eight():
    s = preset_structure("sg")
    counts = [build_vertices(s, m).n_vertices for m in range(9)]
    for m in range(1, 9):
        assert counts[m] == 3 * counts[m - 1] - 3
    assert counts[8] == 9843


def test_sg_recursion_matches_brute_force_enumeration():
    # independent quotient of raw (word, alpha) pairs under prefix-pushed gluings
    s = preset_structure("sg")
    for m in range(1, 5):
        parent = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for word in itertools.product(range(3), repeat=m):
            for alpha in range(3):
                find((word, alpha))
        for k in range(m):
            for prefix in itertools.product(range(3), repeat=k):
                for i, a, j, b in s.gluing:
                    # F_prefix F_i(q_a) = F_prefix F_j(q_b); F_a fixes q_a, so pad with a
                    wi = prefix + (i,) + (a,) * (m - k - 1)
                    wj = prefix + (j,) + (b,) * (m - k - 1)
                    ra, rb = find((wi, a)), find((wj, b))
                    parent[ra] = rb
        roots = {find(x) for x in list(parent)}
        assert len(roots) == build_vertices(s, m).n_vertices


def test_interval_cells():
    cells = cells_at_level(preset_structure("interval"), 2)
    assert len(cells) == 4
    assert [c.word for c in cells] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert all(c.parent == c.index // 2 for c in cells)


def test_sg_level_zero_single_cell():
    cells = cells_at_level(preset_structure("sg"), 0)
    assert len(cells) == 1
    assert cells[0].vertices == (0, 1, 2)
    assert cells[0].parent is None


def test_sg_level_three_cells_share_at_most_one_vertex():
    cells = cells_at_level(preset_structure("sg"), 3)
    assert len(cells) == 27
    for c1, c2 in itertools.combinations(cells, 2):
        assert len(set(c1.vertices) & set(c2.vertices)) <= 1
    assert all(len(set(c.vertices)) == 3 for c in cells)


def test_nesting_prefix_property():
    s = preset_structure("sg")
    fine = build_vertices(s, 5)
    for n in range(5):
        coarse = build_vertices(s, n)
        k = coarse.n_vertices
        np.testing.assert_array_equal(fine.word_code[:k], coarse.word_code)
        np.testing.assert_array_equal(fine.alpha[:k], coarse.alpha)
        np.testing.assert_array_equal(fine.first_level[:k], coarse.first_level)


@pytest.mark.parametrize("m", range(1, 6))
def test_sg_interior_vertices_in_exactly_two_cells(m):
    table = build_vertices(preset_structure("sg"), m)
    counts = np.asarray(table.incidence.sum(axis=1)).ravel()
    assert np.all(counts[:3] == 1)
    assert np.all(counts[3:] == 2)


def test_cells_containing_matches_incidence():
    table = build_vertices(preset_structure("vicsek"), 2)
    for v in range(table.n_vertices):
        cells = table.cells_containing(v)
        assert all(v in table.cell_vertices[c] for c in cells)


def test_canonical_addresses_are_distinct_and_shortest():
    table = build_vertices(preset_structure("sg"), 3)
    addresses = {table.address(v) for v in range(table.n_vertices)}
    assert len(addresses) == table.n_vertices
    assert table.address(0) == ((), 0)
    # the midpoint between q0 and q1 first appears at level 1 in cell 0
    assert table.address(3) == ((0,), 1)


def test_vertex_rows_export():
    rows = list(build_vertices(preset_structure("interval"), 1).vertex_rows())
    assert rows == [(0, 0, "", 0), (1, 0, "", 1), (2, 1, "0", 1)]


@pytest.mark.parametrize("word", [(), (0,), (2, 1, 0), (1, 1, 1, 2)])
def test_word_codec_roundtrip(word):
    assert decode_word(encode_word(word, 3), len(word), 3) == word


@pytest.mark.parametrize(
    "gluing",
    [
        ((0, 1, 0, 0),),            # same map on both sides
        ((0, 1, 1, 5),),            # boundary index out of range
        ((0, 1, 1),),               # malformed rule
    ],
)
def test_invalid_gluing_rejected(gluing):
    with pytest.raises(StructureError):
        SelfSimilarStructure(2, 2, gluing)


def test_disconnected_structure_rejected():
    with pytest.raises(StructureError):
        SelfSimilarStructure(3, 2, ((0, 1, 1, 0),))


def test_structure_is_hashable_and_immutable():
    s = preset_structure("sg")
    assert hash(s) == hash(preset_structure("sg"))
    with pytest.raises(Exception):
        s.alphabet_size = 4


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        build_vertices(preset_structure("sg"), -1)


def test_unknown_preset():
    with pytest.raises(StructureError):
        preset_structure("carpet")
