import numpy as np
import pytest

from catmaxent.estimators.define_model import enumerate_tuples
from catmaxent.shared.benchmark_datasets import BenchmarkConfig, generate_benchmark
from catmaxent.shared.schemas import Attribute, Pattern, PatternConstraint, Schema, pattern_mask
from catmaxent.training.iterative_scaling import fit


@pytest.fixture
def binary_schema():
    # three binary attributes, |S| = 8
    return Schema([Attribute(f'A{n}', ['0', '1']) for n in range(3)])


@pytest.fixture
def four_binary_schema():
    return Schema([Attribute(f'A{n}', ['0', '1']) for n in range(4)])


@pytest.fixture
def census_schema():
    return Schema.from_dict({
        'sex': ['F', 'M'],
        'age': ['0-15', '16-64', '65+'],
        'tenure': ['own', 'rent']
    })


@pytest.fixture
def random_instance():
    """
    Factory for small feasible problems: targets are pattern probabilities under a random positive distribution,
    so every constraint set it returns has a solution strictly inside the simplex.
    """
    def make(seed, n_attributes=4, n_patterns=4, max_cardinality=3, pattern_sizes=(2, 3), with_marginals=False):
        rng = np.random.default_rng(seed)
        cardinalities = rng.integers(2, max_cardinality + 1, size=n_attributes)
        schema = Schema([Attribute(f'A{n}', [str(v) for v in range(k)]) for n, k in enumerate(cardinalities)])
        tuples = enumerate_tuples(schema)
        q = rng.dirichlet(np.ones(len(tuples)))

        patterns = []
        while len(patterns) < n_patterns:
            size = int(rng.integers(pattern_sizes[0], pattern_sizes[1] + 1))
            attributes = rng.choice(n_attributes, size=size, replace=False)
            pattern = Pattern({int(a): int(rng.integers(cardinalities[a])) for a in attributes})
            if pattern not in patterns:
                patterns.append(pattern)
        constraints = [PatternConstraint(p, q[pattern_mask(p, tuples)].sum()) for p in patterns]

        marginals = None
        if with_marginals:
            marginals = [np.bincount(tuples[:, a], weights=q, minlength=k) for a, k in enumerate(cardinalities)]
        return schema, constraints, marginals

    return make


@pytest.fixture(scope='session')
def desk_benchmarks():
    # the default desk-scale benchmark on ten seeds
    return [generate_benchmark(BenchmarkConfig(), seed) for seed in range(10)]


@pytest.fixture(scope='session')
def fitted_desk_benchmarks(desk_benchmarks):
    """
    (benchmark, full model, fit report) per seed: every candidate plus the empirical marginals.
    """
    fitted = []
    for benchmark in desk_benchmarks:
        model, report = fit(benchmark.schema, benchmark.candidates, benchmark.empirical_marginals)
        fitted.append((benchmark, model, report))
    return fitted
