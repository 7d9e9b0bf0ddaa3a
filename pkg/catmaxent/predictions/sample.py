import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List

import numpy as np

from catmaxent.estimators.define_model import MaxEntModel
from catmaxent.predictions.alias import AliasTable
from catmaxent.shared.errors import SamplingError
from catmaxent.shared.schemas import TupleDataset


@dataclass
class SampleSpec():
    """
    Args:
        n (int): tuples to draw
        seed (int): seeds numpy's PCG64 via SeedSequence; one stream is spawned per component and per free attribute
        rejection_cap (int): redraws allowed per tuple before giving up. Defaults to 10**6.
        threads (int): components sampled concurrently. Output does not depend on this. Defaults to 1.
        exact_fallback_size (int): enumerate the free attributes of a block instead of rejecting when there are
            at most this many combinations and the block keeps few of them. Defaults to 10**4.
        exact_acceptance_threshold (float): "few", as a fraction of the block's free mass. Defaults to 0.05.
    """
    n: int
    seed: int
    rejection_cap: int = 10**6
    threads: int = 1
    exact_fallback_size: int = 10**4
    exact_acceptance_threshold: float = 0.05

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f'n must be at least 1, got {self.n}')
        if self.seed < 0:
            raise ValueError(f'seed must be non-negative, got {self.seed}')
        if self.rejection_cap < 1 or self.threads < 1:
            raise ValueError('rejection_cap and threads must be at least 1')


def sample(model: MaxEntModel, spec: SampleSpec) -> TupleDataset:
    """
    Draw ``spec.n`` i.i.d. tuples from ``model``.

    Per component: draw a block by p(B), fix its attributes, draw the remaining attributes from their marginals
    (uniform without marginal constraints) and redraw any tuple that contains a pattern the block excludes.
    Attributes in no component are drawn from their marginals.

    Args:
        model (MaxEntModel): fitted model
        spec (SampleSpec): size, seed and limits

    Raises:
        SamplingError: a block needed more than ``rejection_cap`` redraws for some tuple

    Returns:
        TupleDataset: sampled tuples
    """
    streams = np.random.SeedSequence(spec.seed).spawn(len(model.components) + len(model.free_attributes))
    tables = [AliasTable.make(p) for p in model.marginal_probs]

    tasks = []
    for k, stream in enumerate(streams[:len(model.components)]):
        tasks.append((model.components[k].attributes, lambda k=k, stream=stream: _sample_component(model, k, np.random.default_rng(stream), spec, tables)))
    for a, stream in zip(model.free_attributes, streams[len(model.components):]):
        tasks.append(([a], lambda a=a, stream=stream: tables[a].draw(np.random.default_rng(stream), spec.n)[:, np.newaxis]))

    if spec.threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=spec.threads) as executor:
            results = list(executor.map(lambda task: task[1](), tasks))
    else:
        results = [task[1]() for task in tasks]

    rows = np.empty((spec.n, model.schema.n_attributes), dtype=np.int64)
    for (attributes, _), values in zip(tasks, results):
        rows[:, attributes] = values
    logging.info(f'Sampled {spec.n} tuples with seed {spec.seed}')
    return TupleDataset(model.schema, rows)


def _sample_component(model: MaxEntModel, k: int, rng: np.random.Generator, spec: SampleSpec, tables: List[AliasTable]) -> np.ndarray:
    comp = model.components[k]
    graph = comp.graph
    column = {a: n for n, a in enumerate(comp.attributes)}
    out = np.empty((spec.n, len(comp.attributes)), dtype=np.int64)

    block_of_row = AliasTable.make(model.block_probabilities(k)).draw(rng, spec.n)
    masses = model.block_masses(graph)
    log_marginals = [np.log(p) for p in model.marginal_probs]

    for b in np.unique(block_of_row):
        rows = np.flatnonzero(block_of_row == b)
        block = graph.order[b]
        for a, v in block.assignments.items():
            out[rows, column[a]] = v
        free = [a for a in comp.attributes if a not in block.assignments]
        if not free:
            continue
        # patterns the block's tuples must not contain, restricted to the free attributes
        excluded = [
            [(free.index(a), v) for a, v in p.items if a not in block.assignments]
            for n, p in enumerate(graph.patterns)
            if n not in block.satisfied and p.compatible_with(block.assignments)
        ]
        free_space = int(np.prod([graph.cardinalities[a] for a in free]))
        cum_mass = np.exp(sum(log_marginals[a][v] for a, v in block.assignments.items()))
        acceptance = masses[b] / cum_mass if cum_mass > 0 else 0.
        if excluded and free_space <= spec.exact_fallback_size and acceptance < spec.exact_acceptance_threshold:
            values = _draw_exact(free, excluded, graph.cardinalities, log_marginals, rng, len(rows))
        else:
            values = _draw_rejecting(free, excluded, tables, rng, len(rows), spec.rejection_cap, block)
        out[np.ix_(rows, [column[a] for a in free])] = values
    return out


def _matches_any(values: np.ndarray, excluded) -> np.ndarray:
    bad = np.zeros(len(values), dtype=bool)
    for pattern in excluded:
        match = np.ones(len(values), dtype=bool)
        for col, v in pattern:
            match &= values[:, col] == v
        bad |= match
    return bad


def _draw_rejecting(free, excluded, tables, rng, n, rejection_cap, block) -> np.ndarray:
    values = np.empty((n, len(free)), dtype=np.int64)
    pending = np.arange(n)
    attempts = 0
    while pending.size:
        if attempts >= rejection_cap:
            raise SamplingError(f'Block {list(block.key)} ({block.assignments}) exceeded {rejection_cap} redraws '
                                f'for {pending.size} tuples: almost all of its free mass is excluded')
        attempts += 1
        for col, a in enumerate(free):
            values[pending, col] = tables[a].draw(rng, pending.size)
        pending = pending[_matches_any(values[pending], excluded)]
    return values


def _draw_exact(free, excluded, cardinalities, log_marginals, rng, n) -> np.ndarray:
    combos = np.indices([cardinalities[a] for a in free]).reshape(len(free), -1).T
    log_weights = np.zeros(len(combos))
    for col, a in enumerate(free):
        log_weights += log_marginals[a][combos[:, col]]
    weights = np.exp(log_weights)
    weights[_matches_any(combos, excluded)] = 0.
    return combos[AliasTable.make(weights).draw(rng, n)]
