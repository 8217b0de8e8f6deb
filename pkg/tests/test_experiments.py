import numpy as np
import pytest

from resistpde import (
    ExperimentSpec,
    FormCoefficients,
    LevelFunction,
    SymbolicField,
    diagnose,
    harmonic_extension,
    run_diagonal,
    run_single_space,
    run_varying_space,
)
from resistpde.experiments import TABLE_COLUMNS, decrease_violations, product_data
from resistpde.forms import form_constants

from conftest import PRESETS, uniform


def sg_drift(sg):
    bump = LevelFunction(np.eye(sg.level(1).n_vertices)[1], 1)
    b = SymbolicField(((LevelFunction.constant(sg, 0.1), bump),))
    return FormCoefficients(a=LevelFunction([1.0, 1.5, 1.2], 0), b=b, c=-5.0, lam=0.5, Lam=3.0)


def test_spec_validation(sg):
    with pytest.raises(ValueError):
        ExperimentSpec(sg, uniform(sg), FormCoefficients(), equation="hyperbolic")
    with pytest.raises(ValueError):
        ExperimentSpec(sg, uniform(sg), FormCoefficients(), mode="cable")
    with pytest.raises(ValueError):
        ExperimentSpec(sg, uniform(sg), FormCoefficients(), subdiv=-1)
    spec = ExperimentSpec(sg, uniform(sg), FormCoefficients(c=-1.0), levels=(2, 3),
                          reference_level=4)
    with pytest.raises(ValueError):
        run_varying_space(spec)


def test_decrease_violations():
    assert decrease_violations([4.0, 2.0, 1.0]) == []
    assert decrease_violations([4.0, 4.1, 1.0]) == []
    assert decrease_violations([4.0, 4.3, 1.0]) == [0]
    assert decrease_violations([4.0, 4.1, 1.0], slack=1.0) == [0]


def test_manufactured_solution_is_recovered(sg):
    target = LevelFunction(np.array([0.0, 1.0, 2.0, 0.5, -1.0, 1.5]), 1)
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(2, 3, 4),
                          reference_level=6, manufactured=target)
    table = run_varying_space(spec)
    assert table.columns == TABLE_COLUMNS
    assert np.all(table.column("sup_error") < 1e-8)
    assert np.all(table.column("c0") > 0)
    with pytest.raises(ValueError):
        run_varying_space(ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(0, 1),
                                         reference_level=4, manufactured=target))


def test_interval_self_convergence_ratio(interval):
    x = harmonic_extension(interval, [0.0, 1.0], 0, 9)
    spec = ExperimentSpec(interval, uniform(interval), FormCoefficients(a=1.0, c=-1.0),
                          data=np.cos(np.pi * x), levels=(2, 3, 4, 5, 6), reference_level=9)
    errors = run_varying_space(spec).column("sup_error")
    ratios = errors[:-1] / errors[1:]
    assert np.all(ratios > 3.0) and np.all(ratios < 5.0)


@pytest.mark.parametrize("equation", ["elliptic", "parabolic"])
def test_sg_varying_space_decreases(equation, sg):
    data = product_data(sg, 6, [0.0, 1.0, 0.0], [1.0, 0.0, 2.0]) + 0.5
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), equation=equation, data=data,
                          levels=(2, 3, 4), reference_level=6, t_final=0.25, steps=40)
    table = run_varying_space(spec)
    assert decrease_violations(table.column("sup_error")) == []
    assert table.meta["non_monotone_steps"] == []
    assert table.meta["equation"] == equation


def test_metric_mode_runs(interval):
    x = harmonic_extension(interval, [0.0, 1.0], 0, 8)
    spec = ExperimentSpec(interval, uniform(interval), FormCoefficients(a=1.0, c=-1.0),
                          data=np.cos(np.pi * x), levels=(2, 3, 4), reference_level=8,
                          mode="metric", subdiv=2)
    table = run_varying_space(spec)
    assert table.meta["discretization"] == "metric"
    errors = table.column("sup_error")
    assert np.all(np.diff(errors) < 0)


def test_single_space_zero_perturbation(sg):
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(3,))
    table = run_single_space(spec, {}, ns=(1, 2))
    np.testing.assert_array_equal(table.column("sup_error"), 0.0)


@pytest.mark.parametrize("key", ["a", "c", "b"])
def test_single_space_errors_scale_like_one_over_n(key, sg, rng):
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(3,),
                          data=rng.normal(size=sg.level(3).n_vertices))
    if key == "b":
        eta = SymbolicField.gradient_of(sg, LevelFunction([0.0, 1.0, 0.0], 0))
    else:
        eta = rng.uniform(-1, 1, size=sg.level(3).n_vertices)
    ns = (1, 2, 4, 8, 16)
    table = run_single_space(spec, {key: eta}, ns=ns, amplitude=1e-3)
    scaled = table.column("sup_error") * np.array(ns)
    np.testing.assert_allclose(scaled, scaled[-1], rtol=0.05)
    assert table.meta["C"] == pytest.approx(scaled.max())
    assert decrease_violations(table.column("sup_error")) == []


def test_single_space_validation(sg):
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(2, 3))
    with pytest.raises(ValueError):
        run_single_space(spec, {})
    spec = ExperimentSpec(sg, uniform(sg), sg_drift(sg), levels=(2,), data=np.ones(4))
    with pytest.raises(ValueError):
        run_single_space(spec, {})


def test_diagonal_degenerate_grid_matches_varying(sg):
    ref = 5
    a1 = LevelFunction([1.0, 1.4, 1.2, 1.1, 1.3, 1.25], 1)
    coeffs = FormCoefficients(a=a1, c=-2.0, lam=0.5, Lam=3.0)
    spec = ExperimentSpec(sg, uniform(sg), coeffs, levels=(3,), reference_level=ref)
    grid = run_diagonal(spec, a1.at_level(sg, ref), ns=(1,))
    varying = run_varying_space(spec)
    assert len(grid.rows) == 1
    assert grid.rows[0][2] == pytest.approx(varying.rows[0][1], rel=1e-10, abs=1e-14)


def test_diagonal_grid_shape_and_best(sg):
    ref = 5
    x = product_data(sg, ref, [0.0, 1.0, 0.0], [1.0, 0.0, 2.0])
    coeffs = FormCoefficients(a=1.0, c=-2.0, lam=0.5, Lam=3.0)
    spec = ExperimentSpec(sg, uniform(sg), coeffs, levels=(1, 2, 3), reference_level=ref)
    table = run_diagonal(spec, 1.0 + 0.4 * x, ns=(0, 1, 2))
    pairs = [(int(r[0]), int(r[1])) for r in table.rows]
    assert pairs == [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3), (2, 2), (2, 3)]
    assert table.meta["best_diagonal"] == pytest.approx(min(r[2] for r in table.rows))
    assert len(table.meta["diagonal"]) == 2


@pytest.mark.parametrize("name", PRESETS)
def test_diagnose_matches_closed_formulas(name, structures):
    hs = structures[name]
    out = diagnose(hs, uniform(hs), FormCoefficients(a=1.0, c=-2.0, lam=0.5, Lam=2.0), 2)
    lam0, c0, linf, cinf, K = form_constants(0.5, 2.0, 0, 0, 0, 0, np.array([-2.0]))
    assert out["lambda0"] == pytest.approx(lam0)
    assert out["c0"] == pytest.approx(c0)
    assert out["Lambda_inf"] == pytest.approx(linf)
    assert out["c_inf"] == pytest.approx(cinf)
    assert out["K"] == pytest.approx(K)
    assert out["gamma_b"] == 0.0 and out["gamma_b_hat"] == 0.0
    assert out["V(m)"] == pytest.approx(uniform(hs).min_cell_mass(2))
    assert out["max_cell_diameter"] == pytest.approx(hs.max_cell_diameter(2))


def test_diagnose_reports_shift(sg):
    out = diagnose(sg, uniform(sg), FormCoefficients(a=1.0, c=0.0), 2)
    assert out["c1"] > 0 and not out["feasible"]
    assert out["notes"]


def test_product_data(sg):
    vals = product_data(sg, 2, [1.0, 0.0, 0.0], [1.0, 1.0, 1.0])
    np.testing.assert_allclose(vals, harmonic_extension(sg, [1.0, 0.0, 0.0], 0, 2))
