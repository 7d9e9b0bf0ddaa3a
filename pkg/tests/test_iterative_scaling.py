import numpy as np
import pytest

from catmaxent.estimators.define_model import enumerate_tuples, tuple_probabilities
from catmaxent.evaluation.brute_force import brute_force_maxent, project_to_constraints
from catmaxent.shared.errors import NonConvergenceError, StructuralInfeasibilityError
from catmaxent.shared.schemas import Pattern, PatternConstraint
from catmaxent.shared.stats import entropy
from catmaxent.training import iterative_scaling
from catmaxent.training.iterative_scaling import FitOptions


TIGHT = FitOptions(tolerance=1e-10, max_sweeps=20000)


def test_decompose_disjoint():
    constraints = [Pattern({0: 0, 1: 0}), Pattern({2: 1, 3: 0})]
    specs = iterative_scaling.decompose(constraints)
    assert [s.constraint_indices for s in specs] == [[0], [1]]
    assert [s.attributes for s in specs] == [[0, 1], [2, 3]]


def test_decompose_shared_attribute():
    specs = iterative_scaling.decompose([Pattern({0: 0, 1: 0}), Pattern({1: 1, 2: 0})])
    assert len(specs) == 1
    assert specs[0].attributes == [0, 1, 2]


def test_decompose_empty():
    assert iterative_scaling.decompose([]) == []


def test_decompose_marginal_only_groups():
    specs = iterative_scaling.decompose([Pattern({1: 0, 2: 0})], include_marginals=True, n_attributes=4)
    assert [(s.constraint_indices, s.attributes) for s in specs] == [([0], [1, 2]), ([], [0]), ([], [3])]


def test_step_fixed_point():
    log_u, log_u0 = iterative_scaling.iterative_scaling_step(0.3, 0.3, 0.25, -1.)
    assert log_u == pytest.approx(0.25)
    assert log_u0 == pytest.approx(-1.)


def test_step_reaches_target_in_isolation():
    c, target = 0.2, 0.65
    log_u, log_u0 = iterative_scaling.iterative_scaling_step(c, target, 0.)
    # pattern mass scales by u, the rest stays: new probability is c u / (c u + 1 - c)
    u = np.exp(log_u)
    assert c * u / (c * u + 1 - c) == pytest.approx(target)
    assert np.exp(log_u0) == pytest.approx((1 - target) / (1 - c))


@pytest.mark.parametrize('c', [0., 1.])
def test_step_infeasible(c):
    with pytest.raises(StructuralInfeasibilityError):
        iterative_scaling.iterative_scaling_step(c, 0.5, 0.)


def test_fit_single_constraint(binary_schema):
    model, report = iterative_scaling.fit(binary_schema, [PatternConstraint(Pattern({0: 0}), 0.7)])
    assert report.converged
    assert report.iterations == 1
    tuples = enumerate_tuples(binary_schema)
    expected = np.where(tuples[:, 0] == 0, 0.7 / 4, 0.3 / 4)
    np.testing.assert_allclose(tuple_probabilities(model), expected, atol=1e-12)


def test_fit_no_constraints_is_uniform(binary_schema):
    model, report = iterative_scaling.fit(binary_schema, [])
    assert report.iterations == 0
    np.testing.assert_allclose(tuple_probabilities(model), np.full(8, 1 / 8))


def test_fit_marginals_only_is_product(census_schema):
    marginals = [np.array([0.4, 0.6]), np.array([0.2, 0.5, 0.3]), np.array([0.9, 0.1])]
    model, _ = iterative_scaling.fit(census_schema, [], marginals)
    tuples = enumerate_tuples(census_schema)
    expected = np.prod([marginals[a][tuples[:, a]] for a in range(3)], axis=0)
    np.testing.assert_allclose(tuple_probabilities(model), expected, atol=1e-12)


@pytest.mark.parametrize('seed', range(10))
def test_fit_matches_brute_force(seed, random_instance):
    schema, constraints, _ = random_instance(seed)
    model, report = iterative_scaling.fit(schema, constraints, options=TIGHT)
    assert report.max_residual <= TIGHT.tolerance
    reference = brute_force_maxent(schema, constraints, tolerance=1e-11)
    np.testing.assert_allclose(tuple_probabilities(model), reference, atol=1e-6)


@pytest.mark.parametrize('seed', range(6))
def test_fit_with_marginals_matches_brute_force(seed, random_instance):
    schema, constraints, marginals = random_instance(seed, with_marginals=True)
    model, _ = iterative_scaling.fit(schema, constraints, marginals, options=TIGHT)
    reference = brute_force_maxent(schema, constraints, marginals, tolerance=1e-11)
    np.testing.assert_allclose(tuple_probabilities(model), reference, atol=1e-6)
    for a, row in enumerate(marginals):
        for v, target in enumerate(row):
            assert model.query(Pattern({a: v})) == pytest.approx(target, abs=1e-6)


@pytest.mark.parametrize('seed', range(5))
def test_constraints_satisfied(seed, random_instance):
    schema, constraints, _ = random_instance(seed, n_patterns=5)
    model, report = iterative_scaling.fit(schema, constraints)
    assert report.max_residual <= 1e-6
    for c in constraints:
        assert abs(model.query(c.pattern) - c.target_prob) <= 1e-6 + 1e-9


@pytest.mark.parametrize('seed', range(5))
def test_equal_probability_within_blocks(seed, random_instance):
    schema, constraints, _ = random_instance(seed)
    model, _ = iterative_scaling.fit(schema, constraints, options=TIGHT)
    probs = tuple_probabilities(model)
    groups = {}
    for row, p in zip(enumerate_tuples(schema), probs):
        key = tuple(comp.graph.block_of(row).key for comp in model.components)
        groups.setdefault(key, []).append(p)
    for members in groups.values():
        np.testing.assert_allclose(members, members[0], rtol=1e-10)


@pytest.mark.parametrize('seed', range(4))
def test_entropy_dominance(seed, random_instance):
    schema, constraints, _ = random_instance(seed)
    model, _ = iterative_scaling.fit(schema, constraints, options=TIGHT)
    h_star = entropy(tuple_probabilities(model))
    rng = np.random.default_rng(100 + seed)
    for _ in range(3):
        q = project_to_constraints(rng.dirichlet(np.ones(schema.space_size)), schema, constraints)
        assert h_star >= entropy(q) - 1e-8


def test_component_factorization(four_binary_schema):
    constraints = [PatternConstraint(Pattern({0: 0, 1: 0}), 0.3), PatternConstraint(Pattern({2: 1, 3: 0}), 0.2)]
    model, _ = iterative_scaling.fit(four_binary_schema, constraints)
    assert len(model.components) == 2
    assert model.query(Pattern({0: 0, 1: 0, 2: 1, 3: 0})) == pytest.approx(0.3 * 0.2)
    joint = model.query(Pattern({0: 0, 2: 1}))
    assert joint == pytest.approx(model.query(Pattern({0: 0})) * model.query(Pattern({2: 1})))


@pytest.mark.parametrize('seed', range(3))
def test_block_probabilities_normalised(seed, random_instance):
    schema, constraints, marginals = random_instance(seed, with_marginals=seed % 2 == 0)
    model, _ = iterative_scaling.fit(schema, constraints, marginals)
    for k in range(len(model.components)):
        assert model.block_probabilities(k).sum() == pytest.approx(1., abs=1e-8)


def test_threads_do_not_change_result(random_instance):
    schema, constraints, _ = random_instance(7, n_attributes=6, n_patterns=4, pattern_sizes=(2, 2))
    single, _ = iterative_scaling.fit(schema, constraints, options=FitOptions(threads=1))
    threaded, _ = iterative_scaling.fit(schema, constraints, options=FitOptions(threads=4))
    np.testing.assert_array_equal(single.log_u, threaded.log_u)


def test_warm_start_reuses_parameters(random_instance):
    schema, constraints, _ = random_instance(3)
    model, _ = iterative_scaling.fit(schema, constraints)
    refit, report = iterative_scaling.fit(schema, constraints, initial_model=model)
    assert report.iterations == 0
    np.testing.assert_array_equal(refit.log_u, model.log_u)


def test_inconsistent_constraints_do_not_converge(four_binary_schema):
    # the finer pattern cannot be more frequent than the coarser one
    constraints = [PatternConstraint(Pattern({0: 0}), 0.3), PatternConstraint(Pattern({0: 0, 1: 0}), 0.5)]
    with pytest.raises(NonConvergenceError) as excinfo:
        iterative_scaling.fit(four_binary_schema, constraints, options=FitOptions(max_sweeps=50))
    assert excinfo.value.residual > 1e-6
    assert excinfo.value.report is not None and not excinfo.value.report.converged


def test_fit_report_summary(binary_schema):
    _, report = iterative_scaling.fit(binary_schema, [PatternConstraint(Pattern({0: 0, 1: 1}), 0.4)])
    assert 'converged=True' in report.summary()
    assert report.to_dict()['component_blocks'] == [2]


def test_fit_options_validation():
    with pytest.raises(ValueError):
        FitOptions(tolerance=0.)
    with pytest.raises(ValueError):
        FitOptions(threads=0)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(200))
def test_oracle_equivalence(seed, random_instance):
    # 4-8 attributes of 2-4 values, 1-6 constraints, marginals on every other instance
    n_attributes, n_patterns = 4 + seed % 5, 1 + seed % 6
    schema, constraints, marginals = random_instance(
        1000 + seed, n_attributes=n_attributes, n_patterns=n_patterns, max_cardinality=4, with_marginals=seed % 2 == 0)
    model, report = iterative_scaling.fit(schema, constraints, marginals, options=TIGHT)
    assert report.converged
    for c in constraints:
        assert abs(model.query(c.pattern) - c.target_prob) <= 1e-6
    reference = brute_force_maxent(schema, constraints, marginals, tolerance=1e-10)
    np.testing.assert_allclose(tuple_probabilities(model), reference, rtol=0, atol=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(50))
def test_entropy_dominance_at_scale(seed, random_instance):
    schema, constraints, _ = random_instance(2000 + seed)
    model, _ = iterative_scaling.fit(schema, constraints, options=TIGHT)
    h_star = entropy(tuple_probabilities(model))
    rng = np.random.default_rng(seed)
    for _ in range(20):
        q = project_to_constraints(rng.dirichlet(np.ones(schema.space_size)), schema, constraints)
        assert h_star >= entropy(q) - 1e-8
