import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from catmaxent.estimators.block_graph import BlockGraph, block_masses_from_log_values, compute_block_sizes
from catmaxent.shared.errors import EmptyInputError, SchemaMismatchError
from catmaxent.shared.schemas import Pattern, PatternConstraint, Schema, pattern_mask


class Component():

    def __init__(self, constraint_indices: Sequence[int], patterns: Sequence[Pattern], schema: Schema, log_u=None, graph=None):
        """
        A group of constraints connected through shared attributes, with its own block graph.

        Args:
            constraint_indices (Sequence): indices of the component's constraints in the model, ascending
            patterns (Sequence): the matching patterns, same order
            schema (Schema): full schema
            log_u (np.ndarray, optional): log parameter per constraint. Defaults to zeros.
            graph (BlockGraph, optional): prebuilt graph over ``patterns``, reused if given
        """
        self.constraint_indices = list(constraint_indices)
        self.attributes = sorted({a for p in patterns for a in p.attributes})
        self.log_u = np.zeros(len(self.constraint_indices)) if log_u is None else np.asarray(log_u, dtype=float)
        assert self.log_u.shape == (len(self.constraint_indices),)
        if graph is None:
            graph = BlockGraph(patterns, {a: schema.attributes[a].cardinality for a in self.attributes})
        self.graph = graph

    @property
    def cardinalities(self) -> Dict[int, int]:
        return self.graph.cardinalities

    def __repr__(self):
        return f'Component(constraints {self.constraint_indices}, attributes {self.attributes}, {len(self.graph)} blocks)'


def block_distribution(masses: np.ndarray, incidence: np.ndarray, log_u: np.ndarray):
    """
    Normalised block probabilities p(B) proportional to mass(B) * prod u^I(B), computed in log space.

    Args:
        masses (np.ndarray): independent-model mass of each block (size fraction or p_A(B))
        incidence (np.ndarray): (block, constraint) bool, whether each block satisfies each constraint
        log_u (np.ndarray): log parameter per constraint (columns of ``incidence`` beyond it get log u = 0)

    Returns:
        np.ndarray: p(B), sums to 1
        float: log of the normaliser
    """
    weights = incidence[:, :len(log_u)].astype(float) @ log_u
    support = masses > 0
    log_terms = np.full(len(masses), -np.inf)
    log_terms[support] = np.log(masses[support]) + weights[support]
    log_z = logsumexp(log_terms)
    return np.exp(log_terms - log_z), float(log_z)


class MaxEntModel():

    def __init__(
        self,
        schema: Schema,
        constraints: Sequence[PatternConstraint],
        components: List[Component],
        log_v: Optional[List[np.ndarray]] = None,
        marginal_targets: Optional[List[np.ndarray]] = None
        ):
        """
        Fitted maximum entropy distribution over the tuple space of ``schema``.

        p*(T) = u0 * prod_c u_c^I_c(T) * prod_i v_{i,T_i}.
        Each component carries the u of its constraints and its block graph; attributes outside every
        component are independent with probabilities from v (uniform when marginals are not constrained).
        Treat instances as immutable: fitting builds a new model, queries never change it.

        Args:
            schema (Schema): tuple space
            constraints (Sequence): of PatternConstraint, in canonical order
            components (list): of Component, partitioning ``constraints``
            log_v (list, optional): per-attribute log marginal parameters. None means no marginal constraints.
            marginal_targets (list, optional): per-attribute target frequencies the v were fitted to
        """
        self.schema = schema
        self.constraints = list(constraints)
        self.components = list(components)
        self.marginals_active = log_v is not None
        if log_v is None:
            log_v = [np.zeros(k) for k in schema.cardinalities]
        self.log_v = [np.asarray(row, dtype=float) for row in log_v]
        self.marginal_targets = None if marginal_targets is None else [np.asarray(row, dtype=float) for row in marginal_targets]

        covered = sorted(n for comp in self.components for n in comp.constraint_indices)
        assert covered == list(range(len(self.constraints))), 'components must partition the constraints'
        self.component_of_attribute = {a: k for k, comp in enumerate(self.components) for a in comp.attributes}
        self.free_attributes = [a for a in range(schema.n_attributes) if a not in self.component_of_attribute]

        self._log_marginals = [row - logsumexp(row) for row in self.log_v]
        self._block_probs = []
        self._log_z = []
        for comp in self.components:
            probs, log_z = block_distribution(self.block_masses(comp.graph), comp.graph.incidence, comp.log_u)
            self._block_probs.append(probs)
            self._log_z.append(log_z)

    @property
    def marginal_probs(self) -> List[np.ndarray]:
        # p_A per attribute
        return [np.exp(row) for row in self._log_marginals]

    @property
    def log_v0(self) -> float:
        return -float(sum(logsumexp(row) for row in self.log_v))

    @property
    def log_u0(self) -> float:
        return self.log_v0 - float(sum(self._log_z))

    @property
    def log_u(self) -> np.ndarray:
        # aligned with self.constraints
        log_u = np.zeros(len(self.constraints))
        for comp in self.components:
            log_u[comp.constraint_indices] = comp.log_u
        return log_u

    @property
    def u(self) -> Dict[int, float]:
        return {n: float(np.exp(x)) for n, x in enumerate(self.log_u)}

    @property
    def n_parameters(self) -> int:
        """
        Free multiplicative parameters: one u per constraint, plus k_i - 1 v per attribute if marginals are active.
        """
        n = len(self.constraints)
        if self.marginals_active:
            n += int(np.sum(self.schema.cardinalities - 1))
        return n

    def block_masses(self, graph: BlockGraph) -> np.ndarray:
        """
        Independent-model mass of each block of ``graph``: exact size fraction without marginals,
        p_A(B) by inclusion-exclusion with them.
        """
        if not self.marginals_active:
            return compute_block_sizes(graph).as_fractions(graph.space_size)
        log_values = np.zeros(graph.value_incidence.shape[1])
        for a, offset in graph.value_offsets.items():
            log_values[offset:offset + graph.cardinalities[a]] = self._log_marginals[a]
        return block_masses_from_log_values(graph, log_values)

    def block_probabilities(self, component: int) -> np.ndarray:
        return self._block_probs[component].copy()

    def block_probability(self, component: int, block) -> float:
        """
        Probability that a tuple falls in ``block`` of component ``component``.

        Args:
            component (int): component index
            block (TupleBlock or tuple): block, or its key

        Returns:
            float: p(B)
        """
        graph = self.components[component].graph
        key = block if isinstance(block, tuple) else block.key
        return float(self._block_probs[component][graph.position[key]])

    def query(self, pattern: Pattern) -> float:
        """
        Probability of ``pattern`` under the model.

        Per component touched by the pattern, a temporary block graph is built over the component's patterns
        plus the query restricted to the component, and p(B) is summed over the blocks containing it.
        Components multiply; attributes outside every component contribute their marginal.

        Args:
            pattern (Pattern): query pattern

        Raises:
            SchemaMismatchError: pattern does not fit the schema

        Returns:
            float: p*(T = x)
        """
        pattern.validate(self.schema)
        by_component: Dict[int, Dict[int, int]] = {}
        prob = 1.
        for a, v in pattern.items:
            k = self.component_of_attribute.get(a)
            if k is None:
                prob *= float(np.exp(self._log_marginals[a][v]))
            else:
                by_component.setdefault(k, {})[a] = v
        for k, assignments in sorted(by_component.items()):
            prob *= self._component_query(k, Pattern(assignments))
        return float(min(max(prob, 0.), 1.))

    def _component_query(self, k: int, pattern: Pattern) -> float:
        comp = self.components[k]
        graph = BlockGraph(comp.graph.patterns + [pattern], comp.graph.cardinalities)
        probs, _ = block_distribution(self.block_masses(graph), graph.incidence, comp.log_u)
        return float(probs[graph.incidence[:, -1]].sum())

    def constraint_probabilities(self) -> np.ndarray:
        # p*(constraint pattern), read off the model's own graphs
        probs = np.zeros(len(self.constraints))
        for k, comp in enumerate(self.components):
            probs[comp.constraint_indices] = self._block_probs[k] @ comp.graph.incidence
        return probs

    def log_prob(self, rows) -> np.ndarray:
        """
        Log probability of each tuple in ``rows``, shape (n, n_attributes) of value indices.
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
        if rows.shape[1] != self.schema.n_attributes:
            raise SchemaMismatchError(f'Rows have {rows.shape[1]} columns, schema has {self.schema.n_attributes}')
        log_p = np.full(len(rows), self.log_u0)
        for c, log_u in zip(self.constraints, self.log_u):
            log_p += log_u * pattern_mask(c.pattern, rows)
        for a, row in enumerate(self.log_v):
            log_p += row[rows[:, a]]
        return log_p

    def log_likelihood(self, n_rows: int, empirical=None, empirical_marginals=None) -> float:
        """
        Closed-form log-likelihood of a dataset of ``n_rows`` rows whose pattern frequencies are ``empirical``.

        L = n (log u0 + sum_c p~_c log u_c + sum_ij p~_ij log v_ij), natural log.

        Args:
            n_rows (int): dataset size
            empirical (array-like, optional): empirical frequency per constraint. Defaults to the constraint targets.
            empirical_marginals (list, optional): empirical value frequencies per attribute. Defaults to the marginal targets.

        Returns:
            float: log-likelihood
        """
        if n_rows < 1:
            raise EmptyInputError('Log-likelihood needs at least one row')
        if empirical is None:
            empirical = [c.target_prob for c in self.constraints]
        empirical = np.asarray(empirical, dtype=float)
        assert empirical.shape == (len(self.constraints),)
        per_row = self.log_u0 + float(empirical @ self.log_u)
        if self.marginals_active:
            if empirical_marginals is None:
                empirical_marginals = self.marginal_targets
            assert empirical_marginals is not None, 'marginal model needs empirical marginals'
            per_row += float(sum(np.dot(p, lv) for p, lv in zip(empirical_marginals, self.log_v)))
        return n_rows * per_row

    def __repr__(self):
        return (f'MaxEntModel({len(self.constraints)} constraints, {len(self.components)} components, '
                f'marginals {"on" if self.marginals_active else "off"})')


def enumerate_tuples(schema: Schema, max_space=10**6) -> np.ndarray:
    """
    Every tuple of the space in C order, as a (|S|, n_attributes) int array.
    """
    if schema.space_size > max_space:
        raise ValueError(f'Refusing to enumerate {schema.space_size} tuples (limit {max_space})')
    grids = np.indices(tuple(schema.cardinalities))
    return grids.reshape(schema.n_attributes, -1).T.copy()


def tuple_probabilities(model: MaxEntModel, max_space=10**6) -> np.ndarray:
    # p* over enumerate_tuples(model.schema)
    log_p = model.log_prob(enumerate_tuples(model.schema, max_space))
    logging.debug(f'Enumerated p* sums to {np.exp(logsumexp(log_p))}')
    return np.exp(log_p)
