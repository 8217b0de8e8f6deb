import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resistpde import (
    HarmonicStructure,
    StructureError,
    assemble_form,
    harmonic_extension,
    preset_structure,
    resistance,
    trace_form,
)
from resistpde.harmonic import (
    cell_diameter,
    cell_diameters,
    energy_measure,
    project_Hm,
    resistance_matrix,
    schur_complement,
)


def test_interval_level_two_conductances(interval):
    form = assemble_form(interval, 2)
    assert form.n_edges == 4
    np.testing.assert_allclose(form.conductance, 4.0, rtol=0, atol=1e-14)


def test_sg_level_one_conductances(sg):
    form = assemble_form(sg, 1)
    assert form.n_vertices == 6 and form.n_edges == 9
    np.testing.assert_allclose(form.conductance, 5.0 / 3.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("name", ["interval", "sg", "vicsek"])
def test_level_zero_is_base_form(structures, name):
    hs = structures[name]
    np.testing.assert_array_equal(assemble_form(hs, 0).conductance_matrix(), hs.conductances)


@pytest.mark.parametrize("m", range(6))
def test_sg_trace_tower(sg, m):
    fine = assemble_form(sg, m + 1)
    coarse = assemble_form(sg, m)
    traced = trace_form(fine, np.arange(coarse.n_vertices))
    diff = traced.conductance_matrix() - coarse.conductance_matrix()
    assert np.max(np.abs(diff)) < 1e-10


def test_trace_onto_everything_is_identity(sg):
    form = assemble_form(sg, 2)
    traced = trace_form(form, np.arange(form.n_vertices))
    np.testing.assert_allclose(traced.conductance_matrix(), form.conductance_matrix(),
                               atol=1e-12)


def test_interval_trace_series(interval):
    traced = trace_form(assemble_form(interval, 2), [0, 1])
    np.testing.assert_allclose(traced.conductance_matrix(), [[0, 1], [1, 0]], atol=1e-14)


def test_trace_achieves_infimum(sg, rng):
    # the Schur complement value equals the constrained minimum of the energy
    form = assemble_form(sg, 2)
    keep = np.arange(6)
    traced = trace_form(form, keep)
    v = rng.normal(size=6)
    lap = form.laplacian.toarray()
    free = np.arange(6, form.n_vertices)
    u = np.zeros(form.n_vertices)
    u[keep] = v
    u[free] = np.linalg.solve(lap[np.ix_(free, free)], -lap[np.ix_(free, keep)] @ v)
    assert traced.energy(v) == pytest.approx(form.energy(u), rel=1e-12)


def test_trace_rejects_empty(sg):
    with pytest.raises(ValueError):
        trace_form(assemble_form(sg, 1), [])


def test_schur_complement_dense_and_sparse_agree(sg):
    lap = assemble_form(sg, 2).laplacian
    np.testing.assert_allclose(schur_complement(lap, [0, 1, 2]),
                               schur_complement(lap.toarray(), [0, 1, 2]), atol=1e-13)


def test_triangle_resistance(sg):
    form = assemble_form(sg, 0)
    for p, q in [(0, 1), (0, 2), (1, 2)]:
        assert resistance(form, p, q) == pytest.approx(2.0 / 3.0, abs=1e-14)
    assert resistance(form, 1, 1) == 0.0


@pytest.mark.parametrize("m", range(6))
def test_interval_endpoint_resistance(interval, m):
    assert resistance(assemble_form(interval, m), 0, 1) == pytest.approx(1.0, abs=1e-12)


def test_resistance_independent_of_level(sg):
    r2 = resistance_matrix(assemble_form(sg, 2), np.arange(6))
    for m in (3, 4, 5):
        np.testing.assert_allclose(resistance_matrix(assemble_form(sg, m), np.arange(6)), r2,
                                   atol=1e-12)


def test_sg_extension_weights_against_independent_minimizer(sg):
    # level-1 SG written out by hand: corners 0,1,2 and midpoints
    # 3 = (q0 q1), 4 = (q0 q2), 5 = (q1 q2); each small triangle has unit weight 5/3
    triangles = [(0, 3, 4), (3, 1, 5), (4, 5, 2)]
    lap = np.zeros((6, 6))
    for tri in triangles:
        for a in tri:
            for b in tri:
                if a != b:
                    lap[a, b] -= 5.0 / 3.0
                    lap[a, a] += 5.0 / 3.0
    boundary = np.array([1.0, 0.0, 0.0])
    interior = lap[3:, 3:]
    rhs = -lap[3:, :3] @ boundary
    oracle = np.linalg.lstsq(interior, rhs, rcond=None)[0]
    ours = harmonic_extension(sg, boundary, 0, 1)[3:]
    np.testing.assert_allclose(oracle, [0.4, 0.4, 0.2], atol=1e-14)
    np.testing.assert_allclose(ours, oracle, atol=1e-12)


def test_interval_extension_is_linear(interval):
    values = harmonic_extension(interval, [0.0, 1.0], 0, 3)
    table = interval.level(3)
    # position of a vertex = its dyadic address
    positions = np.array([
        sum(letter * 2.0 ** -(k + 1) for k, letter in enumerate(table.word(v)))
        + table.alpha[v] * 2.0 ** -len(table.word(v))
        for v in range(table.n_vertices)
    ])
    np.testing.assert_allclose(values, positions, atol=1e-14)
    np.testing.assert_allclose(np.sort(values), np.arange(9) / 8.0, atol=1e-14)


@pytest.mark.parametrize("name", ["interval", "sg", "vicsek"])
def test_constant_extension(structures, name):
    hs = structures[name]
    out = harmonic_extension(hs, np.full(hs.n_boundary, 2.5), 0, 4)
    np.testing.assert_allclose(out, 2.5, atol=1e-13)


@pytest.mark.parametrize("name", ["interval", "sg", "vicsek"])
def test_extension_preserves_energy(structures, name, rng):
    hs = structures[name]
    v = rng.normal(size=hs.level(1).n_vertices)
    e1 = assemble_form(hs, 1).energy(v)
    e4 = assemble_form(hs, 4).energy(harmonic_extension(hs, v, 1, 4))
    assert e4 == pytest.approx(e1, rel=1e-11)


def test_projection_identities(sg, rng):
    u = rng.normal(size=sg.level(3).n_vertices)
    form = assemble_form(sg, 3)
    h = project_Hm(sg, u, 3, 1)
    np.testing.assert_allclose(project_Hm(sg, h, 3, 1), h, atol=1e-13)
    assert form.energy(h) <= form.energy(u)
    assert form.energy(u) - form.energy(h) == pytest.approx(form.energy(u - h), rel=1e-10)
    assert abs(form.energy(h, u - h)) < 1e-10 * form.energy(u)
    np.testing.assert_allclose(project_Hm(sg, np.ones_like(u), 3, 2), 1.0, atol=1e-13)


def test_monotone_energies(sg, rng):
    M = 5
    u = rng.normal(size=sg.level(M).n_vertices)
    energies = [assemble_form(sg, M).energy(project_Hm(sg, u, M, n)) for n in range(M + 1)]
    assert all(a <= b * (1 + 1e-12) for a, b in zip(energies, energies[1:]))


def test_energy_measure_interval_example(interval):
    form = assemble_form(interval, 1)
    # vertex order: endpoints 0, 1, then the midpoint
    nu = energy_measure(form, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(nu, [1.0, 1.0, 2.0], atol=1e-14)
    assert nu.sum() == pytest.approx(form.energy([0.0, 0.0, 1.0]))
    assert form.energy([0.0, 0.0, 1.0]) == pytest.approx(4.0)


def test_energy_measure_of_constant(sg):
    np.testing.assert_array_equal(energy_measure(assemble_form(sg, 2), np.ones(15)), 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["interval", "sg", "vicsek"]))
def test_form_properties(seed, name):
    from resistpde import preset_harmonic_structure

    hs = preset_harmonic_structure(name)
    form = assemble_form(hs, 3)
    gen = np.random.default_rng(seed)
    u = gen.normal(size=form.n_vertices)
    g = gen.normal(size=form.n_vertices)
    e_u = form.energy(u)
    # constants have zero energy; the form is nonnegative
    assert abs(form.energy(np.ones(form.n_vertices))) < 1e-12
    assert e_u >= 0
    # Markov property
    assert form.energy(np.clip(u, 0, 1)) <= e_u + 1e-12
    # resistance estimate
    p, q = gen.choice(form.n_vertices, size=2, replace=False)
    assert (u[p] - u[q]) ** 2 <= resistance(form, p, q) * e_u * (1 + 1e-10)
    # Leibniz inequality
    lhs = np.sqrt(form.energy(u * g))
    rhs = np.abs(u).max() * np.sqrt(form.energy(g)) + np.abs(g).max() * np.sqrt(e_u)
    assert lhs <= rhs * (1 + 1e-12)
    # energy measure total mass
    assert energy_measure(form, u).sum() == pytest.approx(e_u, rel=1e-12)


def test_interval_cell_diameters(interval):
    for m in range(6):
        np.testing.assert_allclose(cell_diameters(assemble_form(interval, m)), 2.0**-m,
                                   rtol=1e-12)


def test_sg_cell_diameters_decrease(sg):
    diams = [sg.max_cell_diameter(m) for m in range(7)]
    assert diams[0] == pytest.approx(2.0 / 3.0)
    # global resistance inside a level-1 cell: 11/30, below the isolated-cell 2/5
    assert diams[1] == pytest.approx(11.0 / 30.0, rel=1e-12)
    assert all(b < a for a, b in zip(diams, diams[1:]))
    assert all(d <= 2.0 / 3.0 * 0.6**m + 1e-12 for m, d in enumerate(diams))


def test_vicsek_cell_diameters_scale(vicsek):
    for m in range(4):
        assert vicsek.max_cell_diameter(m) == pytest.approx(0.5 * 3.0**-m, rel=1e-10)


def test_single_cell_diameter_matches_vector(sg):
    form = assemble_form(sg, 2)
    diams = cell_diameters(form)
    for c in range(9):
        assert cell_diameter(form, c) == pytest.approx(diams[c], rel=1e-12)


def test_compatibility_checked():
    with pytest.raises(StructureError):
        HarmonicStructure(preset_structure("interval"), [[0, 1], [1, 0]], 0.3)


@pytest.mark.parametrize("r", [1.0, 1.5, 0.0])
def test_non_regular_rejected(r):
    with pytest.raises(StructureError):
        HarmonicStructure(preset_structure("sg"), np.ones((3, 3)) - np.eye(3), r, check=False)


def test_bad_base_conductances():
    s = preset_structure("sg")
    with pytest.raises(StructureError):
        HarmonicStructure(s, [[0, 1, 0], [1, 0, 0], [0, 0, 0]], 0.6)
    with pytest.raises(StructureError):
        HarmonicStructure(s, [[0, 1, 1], [2, 0, 1], [1, 1, 0]], 0.6)


def test_extension_operator_rejects_downward(sg):
    with pytest.raises(ValueError):
        sg.extension_operator(3, 2)
