import numpy as np
import pytest

from resistpde import (
    IdentificationOperator,
    SelfSimilarMeasure,
    harmonic_extension,
    ks_strong_error,
    preset_harmonic_structure,
)
from resistpde.identification import ext, phi
from resistpde.measures import integrate_product

from conftest import PRESETS, uniform


@pytest.mark.parametrize("name", PRESETS)
def test_phi_of_one_is_one(name):
    hs = preset_harmonic_structure(name)
    op = IdentificationOperator(hs, uniform(hs), 4)
    for m in range(5):
        np.testing.assert_allclose(op.phi(np.ones(hs.level(4).n_vertices), m), 1.0, atol=1e-13)
        np.testing.assert_allclose(op.ext(np.ones(hs.level(m).n_vertices), m), 1.0, atol=1e-13)


def test_interval_phi_of_identity(interval):
    x = harmonic_extension(interval, [0.0, 1.0], 0, 1)
    values = phi(interval, uniform(interval), x, 1, 1)
    # vertex order is (0, 1, midpoint)
    np.testing.assert_allclose(values, [1 / 6, 5 / 6, 1 / 2], atol=1e-14)


@pytest.mark.parametrize("name", PRESETS)
def test_adjoint_identity(name, rng):
    hs = preset_harmonic_structure(name)
    mu = SelfSimilarMeasure(rng.dirichlet(np.full(hs.n_maps, 3.0)))
    ref = 5 if name != "vicsek" else 4
    op = IdentificationOperator(hs, mu, ref)
    n_ref = hs.level(ref).n_vertices
    worst = 0.0
    for m in range(ref + 1):
        vm = op.vertex_measure(m)
        for _ in range(200 // (ref + 1) + 1):
            f = rng.normal(size=n_ref)
            v = rng.normal(size=vm.masses.size)
            lhs = float(np.sum(op.phi(f, m) * v * vm.masses))
            rhs = op.inner(f, op.ext(v, m))
            worst = max(worst, abs(lhs - rhs) / (1 + abs(rhs)))
    assert worst < 1e-9


def test_inner_is_exact_product_integral(sg, rng):
    op = IdentificationOperator(sg, uniform(sg), 3)
    f, g = rng.normal(size=(2, sg.level(3).n_vertices))
    assert op.inner(f, g) == pytest.approx(integrate_product(sg, uniform(sg), f, g, 3))


@pytest.mark.parametrize("name", PRESETS)
def test_ext_is_non_expansive(name, rng):
    hs = preset_harmonic_structure(name)
    op = IdentificationOperator(hs, uniform(hs), 4)
    for m in range(5):
        vm = op.vertex_measure(m)
        for _ in range(20):
            v = rng.normal(size=vm.masses.size)
            assert op.norm(op.ext(v, m)) <= np.sqrt(np.sum(v * v * vm.masses)) + 1e-12


def test_ext_of_indicator_is_spline(sg):
    v = np.zeros(sg.level(1).n_vertices)
    v[4] = 1.0
    np.testing.assert_allclose(ext(sg, v, 1, 3), harmonic_extension(sg, v, 1, 3))
    op = IdentificationOperator(sg, uniform(sg), 3)
    spline = op.ext(v, 1)
    assert spline.min() >= -1e-14 and spline.max() == pytest.approx(1.0)


def test_phi_norm_approaches_l2_norm(sg):
    ref = 6
    op = IdentificationOperator(sg, uniform(sg), ref)
    f = harmonic_extension(sg, [0.0, 1.0, 3.0, 2.0, 0.5, -1.0], 1, ref)
    target = op.norm(f)
    gaps = []
    for m in range(1, ref + 1):
        vm = op.vertex_measure(m)
        gaps.append(abs(np.sqrt(np.sum(op.phi(f, m) ** 2 * vm.masses)) - target))
    assert gaps[-1] < gaps[0]
    assert gaps[-1] < 1e-2 * target


def test_phi_of_fixed_function_approaches_restriction(sg):
    ref = 7
    op = IdentificationOperator(sg, uniform(sg), ref)
    u = harmonic_extension(sg, [0.0, 1.0, 3.0, 2.0, 0.5, -1.0], 1, ref)
    gaps = []
    for m in range(1, ref + 1):
        vm = op.vertex_measure(m)
        diff = op.phi(u, m) - u[: vm.masses.size]
        gaps.append(np.sqrt(np.sum(diff * diff * vm.masses)))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_phi_batch_matches_columns(sg, rng):
    op = IdentificationOperator(sg, uniform(sg), 3)
    fs = rng.normal(size=(sg.level(3).n_vertices, 4))
    batch = op.phi(fs, 2)
    for k in range(4):
        np.testing.assert_allclose(batch[:, k], op.phi(fs[:, k], 2))


def test_level_checks(sg):
    op = IdentificationOperator(sg, uniform(sg), 2)
    with pytest.raises(ValueError):
        op.phi(np.ones(sg.level(2).n_vertices), 3)
    with pytest.raises(ValueError):
        op.ext(np.ones(3), -1)
    with pytest.raises(ValueError):
        ks_strong_error(sg, uniform(sg), np.ones(15), 3, np.ones(15), 2)


def test_ks_error_vanishes_for_harmonic_references(sg, rng):
    ref = 5
    u2 = rng.normal(size=sg.level(2).n_vertices)
    u_ref = harmonic_extension(sg, u2, 2, ref)
    err = ks_strong_error(sg, uniform(sg), u2, 2, u_ref, ref)
    assert err.sup < 1e-13 and err.l2 < 1e-13
    for m in (2, 3, 4):
        err = ks_strong_error(sg, uniform(sg), u_ref[: sg.level(m).n_vertices], m, u_ref, ref)
        assert err.sup < 1e-13
    const = ks_strong_error(sg, uniform(sg), np.full(3, 2.0), 0, np.full(u_ref.size, 2.0), ref)
    assert const.sup < 1e-14 and const.level == 0


def test_ks_error_norms(sg, rng):
    ref = 3
    u_ref = rng.normal(size=sg.level(ref).n_vertices)
    err = ks_strong_error(sg, uniform(sg), np.zeros(6), 1, u_ref, ref)
    assert err.sup == pytest.approx(np.abs(u_ref).max())
    assert err.l2 <= err.sup
