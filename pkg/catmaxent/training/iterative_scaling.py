import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import logsumexp

from catmaxent.estimators.block_graph import BlockGraph, block_masses_from_log_values, compute_block_sizes
from catmaxent.estimators.define_model import Component, MaxEntModel, block_distribution
from catmaxent.shared.errors import NonConvergenceError, StructuralInfeasibilityError
from catmaxent.shared.schemas import (
    Pattern,
    PatternConstraint,
    Schema,
    validate_constraints,
    validate_marginals,
)


@dataclass
class FitOptions():
    """
    Args:
        tolerance (float): stop once every constraint is within this of its target. Defaults to 1e-6.
        max_sweeps (int): sweeps over all constraints before giving up. Defaults to 1000.
        threads (int): components fitted concurrently. Results do not depend on this. Defaults to 1.
        validate_graph (bool): check each block graph against the brute-force order relation. Slow. Defaults to False.
    """
    tolerance: float = 1e-6
    max_sweeps: int = 1000
    threads: int = 1
    validate_graph: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f'tolerance must be positive, got {self.tolerance}')
        if self.max_sweeps < 1:
            raise ValueError(f'max_sweeps must be at least 1, got {self.max_sweeps}')
        if self.threads < 1:
            raise ValueError(f'threads must be at least 1, got {self.threads}')


@dataclass
class FitReport():
    iterations: int
    max_residual: float
    converged: bool
    component_seconds: List[float] = field(default_factory=list)
    component_blocks: List[int] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def summary(self) -> str:
        return (f'converged={self.converged} sweeps={self.iterations} max_residual={self.max_residual:.3e} '
                f'components={len(self.component_seconds)} blocks={sum(self.component_blocks)} '
                f'seconds={sum(self.component_seconds):.3f}')


@dataclass
class ComponentSpec():
    constraint_indices: List[int]
    attributes: List[int]


def decompose(constraints: Sequence, include_marginals: bool = False, n_attributes: Optional[int] = None) -> List[ComponentSpec]:
    """
    Split constraints into groups connected by shared attributes.

    Marginal constraints never join groups: they live in the independent factor.
    With ``include_marginals``, every attribute no pattern touches is returned as its own group with no constraints
    (the marginal-only factors), which needs ``n_attributes``.

    Args:
        constraints (Sequence): of PatternConstraint or Pattern
        include_marginals (bool, optional): also return marginal-only groups. Defaults to False.
        n_attributes (int, optional): schema width, required with ``include_marginals``

    Returns:
        list: of ComponentSpec, ordered by lowest constraint index (marginal-only groups last, by attribute)
    """
    patterns = [c.pattern if isinstance(c, PatternConstraint) else c for c in constraints]
    specs = []
    if patterns:
        attribute_ids = sorted({a for p in patterns for a in p.attributes})
        node_of = {a: len(patterns) + n for n, a in enumerate(attribute_ids)}
        rows, cols = [], []
        for n, p in enumerate(patterns):
            for a in p.attributes:
                rows.append(n)
                cols.append(node_of[a])
        n_nodes = len(patterns) + len(attribute_ids)
        adjacency = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
        _, labels = csgraph.connected_components(adjacency, directed=False)
        groups: Dict[int, List[int]] = {}
        for n in range(len(patterns)):
            groups.setdefault(labels[n], []).append(n)
        for members in sorted(groups.values(), key=min):
            specs.append(ComponentSpec(members, sorted({a for n in members for a in patterns[n].attributes})))
    if include_marginals:
        assert n_attributes is not None, 'n_attributes needed to list marginal-only groups'
        covered = {a for s in specs for a in s.attributes}
        specs.extend(ComponentSpec([], [a]) for a in range(n_attributes) if a not in covered)
    return specs


def iterative_scaling_step(c: float, target: float, log_u: float, log_u0: float = 0.):
    """
    Two-state scaling update for one constraint.

    With c the current probability of the pattern: u <- u (p~/c) ((1-c)/(1-p~)) and u0 <- u0 (1-p~)/(1-c).
    Afterwards the pattern has probability exactly p~, if this constraint were alone.

    Args:
        c (float): current model probability of the pattern
        target (float): target probability p~
        log_u (float): current log u of the constraint
        log_u0 (float, optional): current log u0. Defaults to 0.

    Raises:
        StructuralInfeasibilityError: c is 0 (or 1) while the target is not, so no finite u can reach it

    Returns:
        float: new log u
        float: new log u0
    """
    if c <= 0. or c >= 1.:
        raise StructuralInfeasibilityError(f'Pattern has model probability {c}, cannot reach target {target}',
                                           residual=abs(c - target))
    delta = np.log(target) - np.log(c) + np.log1p(-c) - np.log1p(-target)
    return log_u + float(delta), log_u0 + float(np.log1p(-target) - np.log1p(-c))


class ComponentFitter():

    def __init__(self, spec: ComponentSpec, constraints: Sequence[PatternConstraint], schema: Schema,
                 log_u: np.ndarray, log_v: Dict[int, np.ndarray], marginal_targets: Optional[Dict[int, np.ndarray]],
                 options: FitOptions):
        """
        Iterative scaling of one component: its u, and the v of its attributes when marginals are constrained.

        Args:
            spec (ComponentSpec): constraint indices and attributes of the component
            constraints (Sequence): all constraints of the model
            schema (Schema): full schema
            log_u (np.ndarray): starting log u, aligned with ``spec.constraint_indices``
            log_v (dict): attribute -> starting log v, for the component's attributes
            marginal_targets (dict, optional): attribute -> target frequencies. None means no marginal constraints.
            options (FitOptions): convergence settings
        """
        self.spec = spec
        self.options = options
        patterns = [constraints[n].pattern for n in spec.constraint_indices]
        self.targets = np.array([constraints[n].target_prob for n in spec.constraint_indices])
        self.cardinalities = {a: schema.attributes[a].cardinality for a in spec.attributes}
        self.graph = BlockGraph(patterns, self.cardinalities)
        if options.validate_graph:
            self.graph.validate()
        self.incidence = self.graph.incidence.astype(float)
        self.log_u = np.array(log_u, dtype=float)
        self.log_v = {a: np.array(row, dtype=float) for a, row in log_v.items()}
        self.marginal_targets = marginal_targets
        self._value_graphs: Dict[tuple, BlockGraph] = {}
        self._uniform_masses = None
        self.masses = self._masses(self.graph)

    @property
    def marginals_active(self):
        return self.marginal_targets is not None

    def _masses(self, graph: BlockGraph) -> np.ndarray:
        if not self.marginals_active:
            if graph is self.graph and self._uniform_masses is not None:
                return self._uniform_masses
            masses = compute_block_sizes(graph).as_fractions(graph.space_size)
            if graph is self.graph:
                self._uniform_masses = masses
            return masses
        log_values = np.zeros(graph.value_incidence.shape[1])
        for a, offset in graph.value_offsets.items():
            log_values[offset:offset + self.cardinalities[a]] = self.log_v[a] - logsumexp(self.log_v[a])
        return block_masses_from_log_values(graph, log_values)

    def constraint_probabilities(self) -> np.ndarray:
        probs, _ = block_distribution(self.masses, self.graph.incidence, self.log_u)
        return probs @ self.incidence

    def value_probability(self, a: int, value: int) -> float:
        # p*(A_a = value) through a cached temporary graph; masses follow the current v
        key = (a, value)
        if key not in self._value_graphs:
            self._value_graphs[key] = BlockGraph(self.graph.patterns + [Pattern({a: value})], self.cardinalities)
        graph = self._value_graphs[key]
        probs, _ = block_distribution(self._masses(graph), graph.incidence, self.log_u)
        return float(probs[graph.incidence[:, -1]].sum())

    def sweep(self):
        for j in range(len(self.log_u)):
            probs, _ = block_distribution(self.masses, self.graph.incidence, self.log_u)
            c = float(probs @ self.incidence[:, j])
            self.log_u[j], _ = iterative_scaling_step(c, self.targets[j], self.log_u[j])
        if self.marginals_active:
            for a in self.spec.attributes:
                for value in range(self.cardinalities[a]):
                    c = self.value_probability(a, value)
                    self.log_v[a][value], _ = iterative_scaling_step(c, self.marginal_targets[a][value], self.log_v[a][value])
                    self.masses = self._masses(self.graph)
                self.log_v[a] -= logsumexp(self.log_v[a])

    def residuals(self) -> np.ndarray:
        residuals = [np.abs(self.constraint_probabilities() - self.targets)]
        if self.marginals_active:
            for a in self.spec.attributes:
                residuals.append(np.abs([
                    self.value_probability(a, value) - self.marginal_targets[a][value]
                    for value in range(self.cardinalities[a])
                ]))
        return np.concatenate(residuals)

    def run(self):
        """
        Sweep until converged.

        Raises:
            NonConvergenceError: still above tolerance after ``max_sweeps``, or parameters stopped being finite

        Returns:
            int: sweeps used
            float: final max residual
            float: seconds taken
        """
        start = time.perf_counter()
        residual = float(np.max(self.residuals()))
        sweeps = 0
        while residual > self.options.tolerance:
            if sweeps >= self.options.max_sweeps:
                raise NonConvergenceError(f'Component {self.spec.constraint_indices} did not converge',
                                          residual=residual, iterations=sweeps)
            try:
                self.sweep()
            except StructuralInfeasibilityError as e:
                raise StructuralInfeasibilityError(f'Component {self.spec.constraint_indices}: {e}',
                                                   residual=residual, iterations=sweeps) from e
            sweeps += 1
            if not np.all(np.isfinite(self.log_u)) or not all(np.all(np.isfinite(row)) for row in self.log_v.values()):
                raise NonConvergenceError(f'Component {self.spec.constraint_indices} parameters diverged',
                                          residual=residual, iterations=sweeps)
            residual = float(np.max(self.residuals()))
            logging.debug(f'Component {self.spec.constraint_indices} sweep {sweeps}: max residual {residual:.3e}')
        return sweeps, residual, time.perf_counter() - start


def fit(
    schema: Schema,
    constraints: Sequence[PatternConstraint],
    marginal_targets: Optional[Sequence[np.ndarray]] = None,
    options: Optional[FitOptions] = None,
    initial_model: Optional[MaxEntModel] = None
    ):
    """
    Fit the maximum entropy model satisfying ``constraints`` (and the attribute marginals, if given).

    Starts from the uniform (or marginals-only) distribution, or from ``initial_model``'s parameters when warm
    starting, and sweeps iterative scaling over each independent component until every residual is within tolerance.

    Args:
        schema (Schema): tuple space
        constraints (Sequence): of PatternConstraint, in canonical order
        marginal_targets (Sequence, optional): per-attribute target value frequencies. Defaults to None (no marginals).
        options (FitOptions, optional): convergence settings. Defaults to FitOptions().
        initial_model (MaxEntModel, optional): warm start; constraints it shares by pattern keep their u.

    Raises:
        ConstraintValidationError: invalid constraints or marginals
        NonConvergenceError: a component failed to converge (StructuralInfeasibilityError if a target is unreachable)

    Returns:
        MaxEntModel: fitted model
        FitReport: convergence summary
    """
    options = FitOptions() if options is None else options
    constraints = list(constraints)
    validate_constraints(constraints, schema)
    if marginal_targets is not None:
        marginal_targets = validate_marginals(marginal_targets, schema)

    initial_log_u = {}
    initial_log_v = None
    if initial_model is not None:
        initial_log_u = {c.pattern: x for c, x in zip(initial_model.constraints, initial_model.log_u)}
        if initial_model.marginals_active and marginal_targets is not None:
            initial_log_v = initial_model.log_v
    if marginal_targets is not None:
        log_v = [row.copy() for row in initial_log_v] if initial_log_v is not None else [np.log(row) for row in marginal_targets]
    else:
        log_v = [np.zeros(k) for k in schema.cardinalities]

    specs = decompose(constraints)
    fitters = [
        ComponentFitter(
            spec, constraints, schema,
            log_u=np.array([initial_log_u.get(constraints[n].pattern, 0.) for n in spec.constraint_indices]),
            log_v={a: log_v[a] for a in spec.attributes},
            marginal_targets=None if marginal_targets is None else {a: marginal_targets[a] for a in spec.attributes},
            options=options
        )
        for spec in specs
    ]

    try:
        if options.threads > 1 and len(fitters) > 1:
            with ThreadPoolExecutor(max_workers=options.threads) as executor:
                results = list(executor.map(ComponentFitter.run, fitters))
        else:
            results = [fitter.run() for fitter in fitters]
    except NonConvergenceError as e:
        if e.report is None:
            e.report = FitReport(iterations=e.iterations, max_residual=e.residual, converged=False,
                                 component_blocks=[len(f.graph) for f in fitters])
        logging.critical(f'Fit failed: {e}')
        raise

    components = []
    for fitter in fitters:
        components.append(Component(fitter.spec.constraint_indices, fitter.graph.patterns, schema, log_u=fitter.log_u, graph=fitter.graph))
        for a, row in fitter.log_v.items():
            log_v[a] = row
    if marginal_targets is not None:
        covered = {a for spec in specs for a in spec.attributes}
        for a in range(schema.n_attributes):
            if a not in covered:
                log_v[a] = np.log(marginal_targets[a])  # independent attribute: exact

    model = MaxEntModel(
        schema, constraints, components,
        log_v=None if marginal_targets is None else log_v,
        marginal_targets=marginal_targets
    )
    report = FitReport(
        iterations=max((r[0] for r in results), default=0),
        max_residual=max((r[1] for r in results), default=0.),
        converged=True,
        component_seconds=[r[2] for r in results],
        component_blocks=[len(f.graph) for f in fitters]
    )
    logging.info(f'Fitted {model}: {report.summary()}')
    return model, report
