"""
Reference maximum entropy fit over the explicitly enumerated tuple space.

Exponential in the number of attributes, so only for small schemas: the block-graph engine is tested against it.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from catmaxent.estimators.define_model import enumerate_tuples
from catmaxent.shared.errors import NonConvergenceError, StructuralInfeasibilityError
from catmaxent.shared.schemas import PatternConstraint, Schema, pattern_mask


MAX_SPACE = 10**6


def brute_force_maxent(
    schema: Schema,
    constraints: Sequence[PatternConstraint],
    marginals: Optional[Sequence[np.ndarray]] = None,
    tolerance=1e-9,
    max_sweeps=100000,
    initial: Optional[np.ndarray] = None
    ) -> np.ndarray:
    """
    Iterative scaling directly on the vector of tuple probabilities.

    From the uniform start this converges to the maximum entropy distribution; from ``initial`` it converges to the
    I-projection of ``initial`` onto the constraint set.

    Args:
        schema (Schema): tuple space, at most 10**6 tuples
        constraints (Sequence): of PatternConstraint
        marginals (Sequence, optional): per-attribute target value frequencies
        tolerance (float, optional): max residual. Defaults to 1e-9.
        max_sweeps (int, optional): Defaults to 100000.
        initial (np.ndarray, optional): positive starting distribution over ``enumerate_tuples(schema)``

    Raises:
        ValueError: tuple space larger than 10**6
        NonConvergenceError: residual still above tolerance after ``max_sweeps``

    Returns:
        np.ndarray: probability of each tuple of ``enumerate_tuples(schema)``
    """
    if schema.space_size > MAX_SPACE:
        raise ValueError(f'Refusing brute force over {schema.space_size} tuples (limit {MAX_SPACE})')
    tuples = enumerate_tuples(schema, MAX_SPACE)
    masks = [pattern_mask(c.pattern, tuples) for c in constraints]
    targets = [c.target_prob for c in constraints]
    if marginals is not None:
        for a, row in enumerate(marginals):
            for v, target in enumerate(row):
                masks.append(tuples[:, a] == v)
                targets.append(float(target))

    if initial is None:
        p = np.full(len(tuples), 1. / len(tuples))
    else:
        p = np.asarray(initial, dtype=float).copy()
        assert p.shape == (len(tuples),) and np.all(p > 0)
        p /= p.sum()

    for sweep in range(max_sweeps):
        residual = max((abs(p[m].sum() - t) for m, t in zip(masks, targets)), default=0.)
        if residual <= tolerance:
            logging.debug(f'Brute force converged after {sweep} sweeps')
            return p
        for mask, target in zip(masks, targets):
            c = p[mask].sum()
            if c <= 0. or c >= 1.:
                raise StructuralInfeasibilityError(f'Pattern mass {c} cannot reach {target}', residual=residual, iterations=sweep)
            p[mask] *= target / c
            p[~mask] *= (1. - target) / (1. - c)
        p /= p.sum()
    raise NonConvergenceError('Brute force iterative scaling did not converge', residual=residual, iterations=max_sweeps)


def project_to_constraints(initial: np.ndarray, schema: Schema, constraints, marginals=None, tolerance=1e-9) -> np.ndarray:
    # a distribution satisfying the constraints, generally not the maximum entropy one
    return brute_force_maxent(schema, constraints, marginals, tolerance=tolerance, initial=initial)
