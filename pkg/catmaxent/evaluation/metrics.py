import logging
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from catmaxent.estimators.define_model import MaxEntModel
from catmaxent.predictions.sample import SampleSpec, sample
from catmaxent.shared.errors import ConstraintValidationError, EmptyInputError
from catmaxent.shared.schemas import (
    Pattern,
    PatternConstraint,
    Schema,
    TupleDataset,
    empirical_frequency,
)
from catmaxent.shared.stats import two_state_kl
from catmaxent.training.iterative_scaling import FitOptions, fit
from catmaxent.training.model_selection import SelectionOptions, select


KL_EPSILON = 1e-12


def probability_source(source) -> Callable[[Pattern], float]:
    """
    Wrap a model, dataset, dict or callable as a function from pattern to probability.

    Args:
        source: MaxEntModel (query), TupleDataset (empirical frequency), dict {Pattern: prob} or callable

    Returns:
        callable: pattern -> probability
    """
    if isinstance(source, MaxEntModel):
        return source.query
    if isinstance(source, TupleDataset):
        return lambda pattern: empirical_frequency(source, pattern)
    if isinstance(source, dict):
        return lambda pattern: source[pattern]
    if callable(source):
        return source
    raise TypeError(f'Cannot use {type(source)} as a probability source')


def evaluation_patterns(patterns: Sequence, schema: Optional[Schema] = None, include_attributes=False) -> List[Pattern]:
    """
    The pattern set to evaluate on: the given patterns, optionally plus every single attribute-value pattern.

    Args:
        patterns (Sequence): of Pattern or PatternConstraint
        schema (Schema, optional): needed for ``include_attributes``
        include_attributes (bool, optional): add every {A_i = a_j}. Defaults to False.

    Raises:
        EmptyInputError: the resulting set is empty

    Returns:
        list: of Pattern, without duplicates, in first-seen order
    """
    chosen = [p.pattern if isinstance(p, PatternConstraint) else p for p in patterns]
    if include_attributes:
        assert schema is not None, 'schema needed to add attribute patterns'
        chosen += [Pattern({a: v}) for a, k in enumerate(schema.cardinalities) for v in range(k)]
    unique = list(dict.fromkeys(chosen))
    if not unique:
        raise EmptyInputError('Evaluation pattern set is empty')
    return unique


def approx_kl(p, q, patterns: Sequence[Pattern], epsilon=KL_EPSILON) -> float:
    """
    Sum over patterns of the two-state KL divergence between p(X) and q(X).

    Probabilities are clamped to [epsilon, 1 - epsilon]; how many were clamped is logged as a warning.

    Args:
        p: probability source (see ``probability_source``)
        q: probability source
        patterns (Sequence): evaluation patterns
        epsilon (float, optional): clamp. Defaults to 1e-12.

    Returns:
        float: non-negative divergence
    """
    if len(patterns) == 0:
        raise EmptyInputError('approx_kl needs at least one pattern')
    p_of, q_of = probability_source(p), probability_source(q)
    p_values = np.array([p_of(x) for x in patterns], dtype=float)
    q_values = np.array([q_of(x) for x in patterns], dtype=float)
    clamped = int(np.sum((p_values < epsilon) | (p_values > 1 - epsilon) | (q_values < epsilon) | (q_values > 1 - epsilon)))
    if clamped:
        logging.warning(f'approx_kl clamped {clamped} probabilities to [{epsilon}, 1 - {epsilon}]')
    p_values = np.clip(p_values, epsilon, 1. - epsilon)
    q_values = np.clip(q_values, epsilon, 1. - epsilon)
    return float(np.sum(two_state_kl(p_values, q_values)))


def baseline_independent_model(schema: Schema, marginal_targets: Sequence[np.ndarray]) -> MaxEntModel:
    """
    Model with the attribute marginals and no pattern constraints: attributes are independent.
    """
    if marginal_targets is None:
        raise ConstraintValidationError('The baseline model needs marginal targets')
    model, _ = fit(schema, [], marginal_targets)
    return model


def kl_table(models: Dict[str, MaxEntModel], reference, patterns: Sequence[Pattern], n_samples=1000, seed=0) -> pd.DataFrame:
    """
    Approximate KL of each model, and of a sample drawn from it, against a reference.

    Rows: 'KL(p*, p_ref)' using model queries, 'KL(p~, p_ref)' using the empirical frequencies of ``n_samples``
    tuples sampled from the model. Columns: model names.

    Args:
        models (dict): name -> fitted model
        reference: probability source for the reference distribution, e.g. the generating dataset
        patterns (Sequence): evaluation patterns
        n_samples (int, optional): sample size for the second row. Defaults to 1000.
        seed (int, optional): sampling seed. Defaults to 0.

    Returns:
        pd.DataFrame: metrics table
    """
    table = {}
    for name, model in models.items():
        sampled = sample(model, SampleSpec(n=n_samples, seed=seed))
        table[name] = {
            'KL(p*, p_ref)': approx_kl(model, reference, patterns),
            'KL(p~, p_ref)': approx_kl(sampled, reference, patterns)
        }
    return pd.DataFrame(table)


def timing_report(schema: Schema, candidates: Sequence[PatternConstraint], marginal_targets, n_rows: int,
                  n_samples=1000, seed=0, fit_options: Optional[FitOptions] = None) -> pd.DataFrame:
    """
    Preparation, inference and per-tuple sampling time of the full and heuristic models, in seconds.

    Preparation is selection for the heuristic model, and block graph construction for the full model.
    Report only: wall-clock numbers depend on the machine.

    Returns:
        pd.DataFrame: rows 'full', 'heuristic'; columns 't_pre', 't_infer', 't_sample'
    """
    fit_options = FitOptions() if fit_options is None else fit_options
    rows = {}

    start = time.perf_counter()
    full, report = fit(schema, candidates, marginal_targets, fit_options)
    t_full = time.perf_counter() - start
    # fit time includes graph construction; split it out
    t_full_infer = sum(report.component_seconds)
    rows['full'] = {'t_pre': t_full - t_full_infer, 't_infer': t_full_infer, 't_sample': _time_sampling(full, n_samples, seed)}

    start = time.perf_counter()
    selected, _, _ = select(schema, candidates, marginal_targets, n_rows, SelectionOptions(fit_options=fit_options))
    t_select = time.perf_counter() - start
    start = time.perf_counter()
    heuristic, _ = fit(schema, [candidates[n] for n in selected], marginal_targets, fit_options)
    t_heuristic = time.perf_counter() - start
    rows['heuristic'] = {'t_pre': t_select, 't_infer': t_heuristic, 't_sample': _time_sampling(heuristic, n_samples, seed)}

    return pd.DataFrame(rows).T


def _time_sampling(model, n_samples, seed):
    start = time.perf_counter()
    sample(model, SampleSpec(n=n_samples, seed=seed))
    return (time.perf_counter() - start) / n_samples
