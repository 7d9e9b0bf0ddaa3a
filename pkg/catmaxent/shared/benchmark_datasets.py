import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy import stats

from catmaxent.shared.load_data import constraints_from_dataset
from catmaxent.shared.schemas import (
    Attribute,
    Pattern,
    PatternConstraint,
    Schema,
    TupleDataset,
    clamp_marginals,
    marginal_frequencies,
    pattern_mask,
)


@dataclass
class BenchmarkConfig():
    """
    Settings of a synthetic benchmark. Defaults are desk scale; see ``full_scale``.

    Args:
        n_attributes (int): number of attributes
        n_patterns (int): planted patterns
        n_rows (int): tuples to generate
        cardinality_range (tuple): inclusive range of values per attribute
        pattern_size_range (tuple): inclusive range of attributes per pattern
        frequency_range (tuple): range of the planted Bernoulli frequencies
        dirichlet_concentration (float): symmetric Dirichlet concentration of the random marginals
        marginal_floor (float): least probability of every value in the random marginals. Keeps unstamped rows on
            every value, so no candidate absorbs a whole value.
        n_decoys (int): extra candidate patterns that were not planted
        max_component_patterns (int): patterns (planted and decoy) allowed to share one attribute-connected group.
            Bounds block graph size.
    """
    n_attributes: int = 20
    n_patterns: int = 10
    n_rows: int = 5000
    cardinality_range: Tuple[int, int] = (2, 4)
    pattern_size_range: Tuple[int, int] = (2, 3)
    frequency_range: Tuple[float, float] = (0.1, 0.4)
    dirichlet_concentration: float = 1.
    marginal_floor: float = 0.05
    n_decoys: int = 5
    max_component_patterns: int = 5

    def __post_init__(self):
        assert self.n_attributes >= 1 and self.n_patterns >= 0 and self.n_rows >= 1
        assert 2 <= self.cardinality_range[0] <= self.cardinality_range[1]
        assert 1 <= self.pattern_size_range[0] <= self.pattern_size_range[1] <= self.n_attributes
        assert 0. <= self.frequency_range[0] <= self.frequency_range[1] <= 1.
        assert self.dirichlet_concentration > 0
        assert 0. <= self.marginal_floor * self.cardinality_range[1] < 1.
        assert self.max_component_patterns >= 1

    @classmethod
    def full_scale(cls, **kwargs):
        return cls(**{'n_attributes': 100, 'n_patterns': 50, 'n_rows': 10000, **kwargs})


@dataclass
class Benchmark():
    schema: Schema
    dataset: TupleDataset
    planted: List[Pattern]
    planted_frequencies: np.ndarray
    true_marginals: List[np.ndarray]
    # planted then decoy patterns, targets are realised frequencies; boundary and absorbed ones dropped
    candidates: List[PatternConstraint] = field(default_factory=list)
    is_planted: List[bool] = field(default_factory=list)

    @property
    def empirical_marginals(self) -> List[np.ndarray]:
        return clamp_marginals(marginal_frequencies(self.dataset))


def random_schema(config: BenchmarkConfig, rng: np.random.Generator) -> Schema:
    low, high = config.cardinality_range
    cardinalities = rng.integers(low, high + 1, size=config.n_attributes)
    return Schema([Attribute(f'A{n}', [f'v{j}' for j in range(k)]) for n, k in enumerate(cardinalities)])


def random_patterns(schema: Schema, n_patterns: int, config: BenchmarkConfig, rng: np.random.Generator,
                    existing: List[Pattern] = None, max_tries=10000, strict=True) -> List[Pattern]:
    """
    Draw distinct random patterns, keeping every attribute-connected group (with ``existing``) within
    ``config.max_component_patterns`` patterns.

    Args:
        strict (bool, optional): raise if fewer than ``n_patterns`` fit, else return those that fit with a warning.
            Defaults to True.

    Raises:
        ValueError: strict and fewer than ``n_patterns`` patterns could be placed
    """
    existing = list(existing or [])
    parent = list(range(schema.n_attributes))
    group_size = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def join(attributes):
        roots = {find(a) for a in attributes}
        total = sum(group_size.get(r, 0) for r in roots) + 1
        root = min(roots)
        for r in roots:
            parent[r] = root
        group_size[root] = total

    for p in existing:
        join(p.attributes)

    patterns = []
    low, high = config.pattern_size_range
    for _ in range(max_tries):
        if len(patterns) == n_patterns:
            break
        size = int(rng.integers(low, high + 1))
        attributes = rng.choice(schema.n_attributes, size=size, replace=False)
        values = [int(rng.integers(schema.attributes[a].cardinality)) for a in attributes]
        pattern = Pattern(dict(zip(attributes.tolist(), values)))
        if pattern in patterns or pattern in existing:
            continue
        roots = {find(a) for a in pattern.attributes}
        if sum(group_size.get(r, 0) for r in roots) + 1 > config.max_component_patterns:
            continue
        join(pattern.attributes)
        patterns.append(pattern)
    if len(patterns) < n_patterns:
        message = (f'Could only place {len(patterns)} of {n_patterns} patterns; '
                   'raise max_component_patterns or n_attributes')
        if strict:
            raise ValueError(message)
        logging.warning(message)
    return patterns


def random_marginals(schema: Schema, config: BenchmarkConfig, rng: np.random.Generator) -> List[np.ndarray]:
    # Dirichlet draws lifted so every value has at least config.marginal_floor
    marginals = []
    for k in schema.cardinalities:
        p = stats.dirichlet.rvs(np.full(k, config.dirichlet_concentration), random_state=rng)[0]
        marginals.append(config.marginal_floor + (1. - k * config.marginal_floor) * p)
    return marginals


def drop_absorbed_candidates(dataset: TupleDataset, candidates: List[PatternConstraint]) -> List[PatternConstraint]:
    """
    Drop candidates matching exactly the same rows as a more general candidate or one of their own values.

    Such a pair forces zero probability on every tuple of the general pattern outside the specific one, which
    puts the maximum entropy solution of marginals plus candidates on the boundary.
    """
    counts = {c.pattern: int(pattern_mask(c.pattern, dataset.rows).sum()) for c in candidates}
    value_counts = [np.bincount(dataset.rows[:, a], minlength=k) for a, k in enumerate(dataset.schema.cardinalities)]
    general, dropped = [], []
    for c in sorted(candidates, key=lambda c: len(c.pattern)):  # stable, so general patterns are decided first
        count = counts[c.pattern]
        absorbed = len(c.pattern) > 1 and any(value_counts[a][v] == count for a, v in c.pattern.items)
        absorbed = absorbed or any(
            counts[other.pattern] == count
            for other in general
            if len(other.pattern) < len(c.pattern) and other.pattern.contained_in(c.pattern.as_dict())
        )
        (dropped if absorbed else general).append(c)
    kept = [c for c in candidates if c not in dropped]
    if dropped:
        logging.warning(f'Dropped {len(dropped)} candidate(s) absorbing a more general pattern: '
                        f'{[c.pattern.describe(dataset.schema) for c in dropped]}')
    return kept


def stamp_patterns(schema: Schema, patterns: List[Pattern], frequencies: np.ndarray, marginals: List[np.ndarray],
                   n_rows: int, rng: np.random.Generator) -> np.ndarray:
    """
    Generate rows: each pattern is stamped on a row with its Bernoulli frequency, in a random priority order
    per row where later stamps skip attributes already written; everything left is drawn from the marginals.

    Returns:
        np.ndarray: (n_rows, n_attributes) value indices
    """
    rows = np.full((n_rows, schema.n_attributes), -1, dtype=np.int64)
    if patterns:
        stamped = rng.random((n_rows, len(patterns))) < np.asarray(frequencies)[np.newaxis, :]
        priority = np.argsort(rng.random((n_rows, len(patterns))), axis=1)
        for rank in range(len(patterns)):
            for n, pattern in enumerate(patterns):
                chosen = (priority[:, rank] == n) & stamped[:, n]
                for a, v in pattern.items:
                    write = chosen & (rows[:, a] < 0)
                    rows[write, a] = v
    for a, p in enumerate(marginals):
        empty = rows[:, a] < 0
        rows[empty, a] = rng.choice(len(p), size=int(empty.sum()), p=p)
    return rows


def generate_benchmark(config: BenchmarkConfig, seed: int) -> Benchmark:
    """
    Random schema, Dirichlet marginals and planted patterns, then a dataset generated by stamping the patterns.

    Candidate constraints are the planted and decoy patterns with their realised frequencies in the dataset.
    Decoys are placed while attribute groups have room; candidates at frequency 0 or 1, or absorbing a more
    general pattern, are dropped so the full model has an interior solution.

    Args:
        config (BenchmarkConfig): sizes and ranges
        seed (int): everything is deterministic given the seed

    Raises:
        ValueError: the planted patterns do not fit within max_component_patterns

    Returns:
        Benchmark: dataset, planted patterns and candidates
    """
    rng = np.random.default_rng(seed)
    schema = random_schema(config, rng)
    marginals = random_marginals(schema, config, rng)
    planted = random_patterns(schema, config.n_patterns, config, rng)
    frequencies = rng.uniform(*config.frequency_range, size=len(planted))
    decoys = random_patterns(schema, config.n_decoys, config, rng, existing=planted, strict=False)

    rows = stamp_patterns(schema, planted, frequencies, marginals, config.n_rows, rng)
    dataset = TupleDataset(schema, rows)
    logging.info(f'Generated benchmark of {len(dataset)} rows over {schema}, {len(planted)} planted patterns')

    all_patterns = planted + decoys
    candidates = drop_absorbed_candidates(dataset, constraints_from_dataset(dataset, all_patterns))
    kept = {c.pattern for c in candidates}
    is_planted = [p in set(planted) for p in all_patterns if p in kept]
    return Benchmark(schema, dataset, planted, frequencies, marginals, candidates, is_planted)
