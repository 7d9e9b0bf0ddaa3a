import numpy as np
import pytest

from catmaxent.estimators.define_model import enumerate_tuples
from catmaxent.evaluation import brute_force, metrics
from catmaxent.shared.errors import ConstraintValidationError, EmptyInputError
from catmaxent.shared.schemas import (
    Attribute,
    Pattern,
    PatternConstraint,
    Schema,
    TupleDataset,
    marginal_frequencies,
    pattern_mask,
)
from catmaxent.shared.stats import heuristic_h
from catmaxent.training.iterative_scaling import fit


@pytest.fixture
def marginals():
    return [np.array([0.3, 0.7]), np.array([0.6, 0.4]), np.array([0.5, 0.5])]


@pytest.fixture
def correlated_dataset(binary_schema):
    # A0 and A1 agree in 90% of rows
    rng = np.random.default_rng(0)
    a0 = rng.integers(0, 2, size=2000)
    a1 = np.where(rng.random(2000) < 0.9, a0, 1 - a0)
    a2 = rng.integers(0, 2, size=2000)
    return TupleDataset(binary_schema, np.column_stack([a0, a1, a2]))


def test_approx_kl_identical(binary_schema, marginals):
    model = metrics.baseline_independent_model(binary_schema, marginals)
    patterns = metrics.evaluation_patterns([Pattern({0: 0, 1: 1})], binary_schema, include_attributes=True)
    assert metrics.approx_kl(model, model, patterns) == pytest.approx(0., abs=1e-12)


def test_approx_kl_is_sum_of_h():
    p = {Pattern({0: 0}): 0.2, Pattern({1: 1}): 0.6}
    q = {Pattern({0: 0}): 0.4, Pattern({1: 1}): 0.5}
    expected = heuristic_h(0.2, 0.4) + heuristic_h(0.6, 0.5)
    assert metrics.approx_kl(p, q, list(p)) == pytest.approx(expected)


def test_approx_kl_asymmetric():
    p = {Pattern({0: 0}): 0.1}
    q = {Pattern({0: 0}): 0.6}
    forward = metrics.approx_kl(p, q, list(p))
    backward = metrics.approx_kl(q, p, list(p))
    assert forward > 0 and backward > 0
    assert forward != pytest.approx(backward)


def test_approx_kl_clamps_boundaries():
    p = {Pattern({0: 0}): 0.}
    q = {Pattern({0: 0}): 0.5}
    assert np.isfinite(metrics.approx_kl(p, q, list(p)))
    assert np.isfinite(metrics.approx_kl(q, p, list(p)))


def test_approx_kl_empty():
    with pytest.raises(EmptyInputError):
        metrics.approx_kl({}, {}, [])


def test_baseline_factorises(binary_schema, marginals):
    model = metrics.baseline_independent_model(binary_schema, marginals)
    assert model.query(Pattern({0: 0, 1: 1})) == pytest.approx(0.3 * 0.4)
    assert model.constraints == []


def test_baseline_needs_marginals(binary_schema):
    with pytest.raises(ConstraintValidationError):
        metrics.baseline_independent_model(binary_schema, None)


def test_baseline_diverges_from_dependent_data(binary_schema, correlated_dataset):
    baseline = metrics.baseline_independent_model(binary_schema, marginal_frequencies(correlated_dataset))
    patterns = [Pattern({0: v0, 1: v1}) for v0 in range(2) for v1 in range(2)]
    assert metrics.approx_kl(correlated_dataset, baseline, patterns) > 0.1


def test_fitted_model_beats_baseline(binary_schema, correlated_dataset):
    observed = marginal_frequencies(correlated_dataset)
    patterns = [Pattern({0: v, 1: v}) for v in range(2)]
    constraints = [PatternConstraint(p, pattern_mask(p, correlated_dataset.rows).mean()) for p in patterns]
    model, _ = fit(binary_schema, constraints, observed)
    baseline = metrics.baseline_independent_model(binary_schema, observed)
    evaluation = metrics.evaluation_patterns(constraints, binary_schema, include_attributes=True)
    fitted_kl = metrics.approx_kl(model, correlated_dataset, evaluation)
    baseline_kl = metrics.approx_kl(baseline, correlated_dataset, evaluation)
    assert fitted_kl < 1e-8
    assert baseline_kl > 100 * fitted_kl


def test_evaluation_patterns(binary_schema):
    constraints = [PatternConstraint(Pattern({0: 0, 1: 1}), 0.3)]
    assert metrics.evaluation_patterns(constraints) == [Pattern({0: 0, 1: 1})]
    with_attributes = metrics.evaluation_patterns(constraints + [Pattern({0: 0})], binary_schema, include_attributes=True)
    assert len(with_attributes) == 1 + 6
    with pytest.raises(EmptyInputError):
        metrics.evaluation_patterns([])


def test_kl_table(binary_schema, correlated_dataset):
    baseline = metrics.baseline_independent_model(binary_schema, marginal_frequencies(correlated_dataset))
    patterns = metrics.evaluation_patterns([], binary_schema, include_attributes=True)
    table = metrics.kl_table({'baseline': baseline}, correlated_dataset, patterns, n_samples=2000, seed=0)
    assert list(table.columns) == ['baseline']
    assert list(table.index) == ['KL(p*, p_ref)', 'KL(p~, p_ref)']
    # only single attributes: the independent model matches them exactly
    assert table.loc['KL(p*, p_ref)', 'baseline'] == pytest.approx(0., abs=1e-10)
    assert table.loc['KL(p~, p_ref)', 'baseline'] >= 0


def test_brute_force_uniform(binary_schema):
    np.testing.assert_allclose(brute_force.brute_force_maxent(binary_schema, []), np.full(8, 1 / 8))


def test_brute_force_satisfies_constraints(random_instance):
    schema, constraints, marginals = random_instance(0, with_marginals=True)
    p = brute_force.brute_force_maxent(schema, constraints, marginals)
    tuples = enumerate_tuples(schema)
    for c in constraints:
        assert abs(p[pattern_mask(c.pattern, tuples)].sum() - c.target_prob) <= 1e-9
    for a, row in enumerate(marginals):
        np.testing.assert_allclose(np.bincount(tuples[:, a], weights=p, minlength=len(row)), row, atol=1e-9)


def test_brute_force_refuses_large_spaces():
    schema = Schema([Attribute(f'A{n}', ['0', '1']) for n in range(21)])
    with pytest.raises(ValueError):
        brute_force.brute_force_maxent(schema, [])


def test_project_to_constraints(random_instance):
    schema, constraints, _ = random_instance(1)
    rng = np.random.default_rng(0)
    q = brute_force.project_to_constraints(rng.dirichlet(np.ones(schema.space_size)), schema, constraints)
    tuples = enumerate_tuples(schema)
    for c in constraints:
        assert abs(q[pattern_mask(c.pattern, tuples)].sum() - c.target_prob) <= 1e-9


@pytest.mark.slow
def test_timing_report(random_instance):
    schema, constraints, marginals = random_instance(0, n_patterns=4, with_marginals=True)
    table = metrics.timing_report(schema, constraints, marginals, n_rows=1000, n_samples=200)
    assert list(table.index) == ['full', 'heuristic']
    assert list(table.columns) == ['t_pre', 't_infer', 't_sample']
    assert np.all(table.values >= 0)


@pytest.mark.slow
def test_full_model_beats_baseline_on_benchmarks(fitted_desk_benchmarks):
    for benchmark, full, _ in fitted_desk_benchmarks:
        marginals = benchmark.empirical_marginals
        patterns = metrics.evaluation_patterns(benchmark.candidates, benchmark.schema, include_attributes=True)
        baseline = metrics.baseline_independent_model(benchmark.schema, marginals)
        kl_full = metrics.approx_kl(full, benchmark.dataset, patterns)
        kl_baseline = metrics.approx_kl(baseline, benchmark.dataset, patterns)
        assert kl_full <= 1e-3
        assert kl_baseline >= 100 * kl_full
