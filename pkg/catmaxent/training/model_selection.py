import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from catmaxent.estimators.define_model import MaxEntModel
from catmaxent.shared.errors import FitError, SelectionAbortedError
from catmaxent.shared.schemas import PatternConstraint, Schema, validate_constraints
from catmaxent.shared.stats import heuristic_h
from catmaxent.training.iterative_scaling import FitOptions, fit


# keeps h finite when a model probability is numerically 0 or 1
QUERY_CLAMP = 1e-12


def bic(model: MaxEntModel, n_rows: int, log_likelihood: Optional[float] = None) -> float:
    """
    BIC = -2 L + N log n, natural log, with N = model.n_parameters.

    Args:
        model (MaxEntModel): fitted model
        n_rows (int): dataset size
        log_likelihood (float, optional): precomputed L. Defaults to the closed form at the constraint targets.

    Returns:
        float: BIC score, lower is better
    """
    assert n_rows >= 1
    if log_likelihood is None:
        log_likelihood = model.log_likelihood(n_rows)
    return -2. * log_likelihood + model.n_parameters * np.log(n_rows)


@dataclass
class SelectionOptions():
    """
    Args:
        use_bic (bool): stop once BIC stops decreasing. If False, run until candidates run out. Defaults to True.
        strict_bic (bool): accept only a strict BIC decrease (otherwise non-increase). Defaults to True.
        criterion (str): 'heuristic' picks the argmax-h candidate, 'likelihood' refits every candidate and picks
            the argmax-L one (the greedy-optimal trajectory). Defaults to 'heuristic'.
        max_patterns (int, optional): stop after this many accepted patterns. Defaults to None.
        threads (int): workers for scoring candidates. Defaults to 1.
        fit_options (FitOptions): passed to every refit.
    """
    use_bic: bool = True
    strict_bic: bool = True
    criterion: str = 'heuristic'
    max_patterns: Optional[int] = None
    threads: int = 1
    fit_options: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if self.criterion not in ('heuristic', 'likelihood'):
            raise ValueError(f'criterion must be heuristic or likelihood, got {self.criterion}')
        if self.threads < 1:
            raise ValueError(f'threads must be at least 1, got {self.threads}')


@dataclass
class SelectionStep():
    iteration: int
    constraint_index: int  # -1 for the starting model
    score: float  # h, or L for the likelihood criterion
    log_likelihood: float
    bic: float
    n_parameters: int
    accepted: bool


@dataclass
class SelectionTrace():
    steps: List[SelectionStep] = field(default_factory=list)
    stop_reason: str = ''

    @property
    def accepted(self) -> List[SelectionStep]:
        return [s for s in self.steps if s.accepted and s.constraint_index >= 0]

    @property
    def selected_indices(self) -> List[int]:
        return [s.constraint_index for s in self.accepted]

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame([asdict(s) for s in self.steps])
        df.attrs['stop_reason'] = self.stop_reason
        return df

    def log_likelihood_gains(self) -> np.ndarray:
        """
        Gain in L over the starting model after each accepted iteration.
        """
        start = self.steps[0].log_likelihood
        return np.array([s.log_likelihood - start for s in self.accepted])


def select(
    schema: Schema,
    candidates: Sequence[PatternConstraint],
    marginal_targets: Optional[Sequence[np.ndarray]],
    n_rows: int,
    options: Optional[SelectionOptions] = None
    ):
    """
    Greedy forward selection of the most informative constraints.

    Starts from the marginals-only (or uniform) model. Each iteration scores the remaining candidates,
    refits with the best one added (warm started, new u = 1) and accepts it only if BIC decreases.
    Ties go to the lowest candidate index.

    Args:
        schema (Schema): tuple space
        candidates (Sequence): of PatternConstraint, targets are empirical frequencies over ``n_rows`` rows
        marginal_targets (Sequence, optional): empirical attribute marginals, kept in the model from the start
        n_rows (int): dataset size, for L and BIC
        options (SelectionOptions, optional): defaults to SelectionOptions()

    Raises:
        SelectionAbortedError: a refit failed; ``.trace`` holds the steps so far

    Returns:
        list: indices into ``candidates`` of the accepted constraints, in order of acceptance
        MaxEntModel: model fitted to the accepted constraints
        SelectionTrace: every scored step, including the final rejected one
    """
    options = SelectionOptions() if options is None else options
    candidates = list(candidates)
    validate_constraints(candidates, schema)
    trace = SelectionTrace()

    def refit(indices, warm):
        return fit(schema, [candidates[n] for n in indices], marginal_targets, options.fit_options, initial_model=warm)[0]

    try:
        model = refit([], None)
    except FitError as e:
        raise SelectionAbortedError(f'Starting model failed to fit: {e}', trace=trace) from e
    current_ll = model.log_likelihood(n_rows)
    current_bic = bic(model, n_rows, current_ll)
    trace.steps.append(SelectionStep(0, -1, float('nan'), current_ll, current_bic, model.n_parameters, True))

    selected: List[int] = []
    remaining = list(range(len(candidates)))
    iteration = 0
    pbar = tqdm(total=len(candidates), desc='selecting', disable=not logging.getLogger().isEnabledFor(logging.INFO))
    while True:
        if not remaining:
            trace.stop_reason = 'candidates exhausted'
            break
        if options.max_patterns is not None and len(selected) >= options.max_patterns:
            trace.stop_reason = 'max patterns reached'
            break
        iteration += 1
        try:
            if options.criterion == 'heuristic':
                scores = _heuristic_scores(model, [candidates[n] for n in remaining], options.threads)
                best = int(np.argmax(scores))  # first maximum, i.e. lowest index
                new_model = refit(selected + [remaining[best]], model)
            else:
                scores, fitted = _likelihood_scores(refit, model, selected, remaining, n_rows)
                best = int(np.argmax(scores))
                new_model = fitted[best]
        except FitError as e:
            trace.stop_reason = f'refit failed: {e}'
            pbar.close()
            raise SelectionAbortedError(f'Selection aborted at iteration {iteration}: {e}', trace=trace) from e

        chosen = remaining[best]
        new_ll = new_model.log_likelihood(n_rows)
        new_bic = bic(new_model, n_rows, new_ll)
        improves = new_bic < current_bic if options.strict_bic else new_bic <= current_bic
        accepted = improves or not options.use_bic
        trace.steps.append(SelectionStep(iteration, chosen, float(scores[best]), new_ll, new_bic, new_model.n_parameters, accepted))
        logging.info(f'Iteration {iteration}: candidate {chosen} score {scores[best]:.4g} L {new_ll:.4f} BIC {new_bic:.4f} '
                     f'({"accepted" if accepted else "rejected"})')
        if not accepted:
            trace.stop_reason = 'BIC non-decreasing'
            break
        selected.append(chosen)
        remaining.remove(chosen)
        model, current_ll, current_bic = new_model, new_ll, new_bic
        pbar.update(1)
    pbar.close()
    logging.info(f'Selected {len(selected)} of {len(candidates)} candidates, stop reason: {trace.stop_reason}')
    return selected, model, trace


def _heuristic_scores(model: MaxEntModel, candidates: List[PatternConstraint], threads: int) -> np.ndarray:
    def score(c):
        model_prob = min(max(model.query(c.pattern), QUERY_CLAMP), 1. - QUERY_CLAMP)
        return heuristic_h(model_prob, c.target_prob)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return np.array(list(executor.map(score, candidates)))
    return np.array([score(c) for c in candidates])


def _likelihood_scores(refit, model, selected, remaining, n_rows):
    fitted = [refit(selected + [n], model) for n in remaining]
    return np.array([m.log_likelihood(n_rows) for m in fitted]), fitted
