"""
Tuple blocks and the block graph.

A tuple block is the set of tuples sharing one indicator vector over a list of patterns.
Blocks are identified by that indicator vector (the sorted indices of the patterns their tuples contain),
and ordered by containment of their fixed assignments. The graph never enumerates tuples:
block sizes and masses come from inclusion-exclusion over the descendants of each block.
"""
import itertools
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from catmaxent.shared.errors import ConstraintValidationError, InternalConsistencyError
from catmaxent.shared.schemas import Pattern, PatternConstraint, indicator


NEGATIVE_MASS_TOLERANCE = 1e-10


class TupleBlock():

    __slots__ = ('satisfied', 'key', 'assignments', 'children')

    def __init__(self, satisfied, assignments: Dict[int, int]):
        """
        Args:
            satisfied (iterable): indices of every pattern contained by the tuples of this block
            assignments (dict): attribute index -> value index fixed by those patterns
        """
        self.satisfied = frozenset(satisfied)
        self.key = tuple(sorted(self.satisfied))
        self.assignments = dict(assignments)
        self.children: Dict[Tuple[int, ...], 'TupleBlock'] = {}  # insertion-ordered for determinism

    @property
    def attributes(self):
        return frozenset(self.assignments)

    def __repr__(self):
        return f'TupleBlock({list(self.key)}, {self.assignments})'


def partial_order_leq(b1: TupleBlock, b2: TupleBlock) -> bool:
    """
    True iff attr(b1) is a subset of attr(b2) and the blocks agree on every shared attribute.
    """
    a2 = b2.assignments
    return all(a2.get(a, -1) == v for a, v in b1.assignments.items())


def closure(assignments: Dict[int, int], patterns: Sequence[Pattern]) -> frozenset:
    # every pattern contained in the assignments
    return frozenset(n for n, p in enumerate(patterns) if p.contained_in(assignments))


def create_block(block: TupleBlock, pattern_index: int, patterns: Sequence[Pattern]) -> Optional[TupleBlock]:
    """
    Merge pattern ``pattern_index`` into ``block``.

    The merged block is keyed by every pattern its assignments contain, not only the two merged sources,
    so two merges reaching the same assignments always yield the same key.

    Args:
        block (TupleBlock): block to extend
        pattern_index (int): index into ``patterns``
        patterns (Sequence): all patterns of the graph

    Returns:
        TupleBlock: the merged block; ``block`` itself if it already contains the pattern (duplicate);
        None if the pattern conflicts with the block on a shared attribute (incompatible)
    """
    if pattern_index in block.satisfied:
        return block
    pattern = patterns[pattern_index]
    if not pattern.compatible_with(block.assignments):
        return None
    merged = dict(block.assignments)
    merged.update(pattern.items)
    return TupleBlock(closure(merged, patterns), merged)


class BlockSizes():

    def __init__(self, cum: List[int], size: List[int]):
        # exact integer sizes, aligned with BlockGraph.order
        self.cum = cum
        self.size = size

    @property
    def total(self) -> int:
        return sum(self.size)

    def as_fractions(self, space_size: int) -> np.ndarray:
        # int / int true division is correctly rounded, even for very large ints
        return np.array([s / space_size for s in self.size], dtype=float)


class BlockGraph():

    def __init__(self, patterns: Sequence, cardinalities: Dict[int, int]):
        """
        Build the graph of tuple blocks induced by ``patterns`` over the attributes in ``cardinalities``.

        Each pattern is merged, in order, with every block existing when its turn starts; each new block is
        placed in the graph with ``find_position`` from the root.
        Once built the graph is never changed; see ``compute_block_sizes`` and ``compute_block_marginal_probs``.

        Args:
            patterns (Sequence): of Pattern (or PatternConstraint), attribute indices refer to the full schema
            cardinalities (dict): attribute index -> cardinality, for every attribute the graph spans
        """
        self.patterns = [p.pattern if isinstance(p, PatternConstraint) else p for p in patterns]
        self.cardinalities = dict(sorted(cardinalities.items()))
        for p in self.patterns:
            missing = set(p.attributes) - set(self.cardinalities)
            assert not missing, f'{p} uses attributes {missing} outside the graph'

        self.root = TupleBlock(frozenset(), {})
        self.index: Dict[Tuple[int, ...], TupleBlock] = {self.root.key: self.root}
        self._settled = set()
        self._build()
        self._freeze()

    @property
    def attributes(self) -> List[int]:
        return list(self.cardinalities)

    @property
    def space_size(self) -> int:
        return math.prod(self.cardinalities.values())

    def __len__(self):
        return len(self.order)

    def _build(self):
        for n in range(len(self.patterns)):
            for block in list(self.index.values()):  # blocks existing at iteration start
                new = create_block(block, n, self.patterns)
                if new is None or new.key in self.index:
                    continue
                self._settled = set()
                placed = self.find_position(self.root, None, new)
                assert placed, 'the root precedes every block'
                self.index[new.key] = new
        logging.debug(f'Built block graph of {len(self.index)} blocks from {len(self.patterns)} patterns')

    def find_position(self, curr: TupleBlock, last: Optional[TupleBlock], new: TupleBlock) -> bool:
        """
        Place ``new`` below ``curr`` (reached from ``last``), if they are related.

        Case 1: same block, nothing to do.
        Case 2: new precedes curr, so splice new between last and curr.
        Case 3: curr precedes new, so insert new below curr: as a direct child if curr is a leaf,
        else recurse into the children, falling back to a direct child if no branch accepts it.
        Descendants of the rejecting children which follow new are then linked below new.
        Case 4: unrelated, fail.

        Returns:
            bool: True if new was placed (or already present) below curr
        """
        if curr.key == new.key:
            return True
        if partial_order_leq(new, curr):
            assert last is not None
            last.children.pop(curr.key, None)
            new.children[curr.key] = curr
            last.children[new.key] = new
            return True
        if partial_order_leq(curr, new):
            if curr.key in self._settled:  # reached again by another path
                return True
            if not curr.children:
                curr.children[new.key] = new
            else:
                failed = self._insert_descendant(new, curr)
                self._check_descendant(failed, new)
            self._settled.add(curr.key)
            return True
        return False

    def _insert_descendant(self, new: TupleBlock, curr: TupleBlock) -> List[TupleBlock]:
        failed = []
        succeeded = False
        for child in list(curr.children.values()):
            if self.find_position(child, curr, new):
                succeeded = True
            else:
                failed.append(child)
        if not succeeded:
            curr.children[new.key] = new
        return failed

    def _check_descendant(self, failed: List[TupleBlock], new: TupleBlock):
        # blocks below an unrelated child may still follow new
        for block in failed:
            stack = list(block.children.values())
            seen = set()
            while stack:
                d = stack.pop()
                if d.key in seen or d.key == new.key:
                    continue
                seen.add(d.key)
                if partial_order_leq(new, d):
                    new.children.setdefault(d.key, d)
                else:
                    stack.extend(d.children.values())

    def _freeze(self):
        # more fixed attributes first: every descendant precedes its ancestors
        self.order: List[TupleBlock] = sorted(self.index.values(), key=lambda b: (-len(b.assignments), b.key))
        self.position = {b.key: n for n, b in enumerate(self.order)}
        descendants: List[set] = [set() for _ in self.order]
        for n, block in enumerate(self.order):
            for child in block.children.values():
                m = self.position[child.key]
                assert m < n, f'edge {block} -> {child} breaks the order'
                descendants[n].add(m)
                descendants[n] |= descendants[m]
        self.descendants = [frozenset(d) for d in descendants]

        n_blocks = len(self.order)
        self.incidence = np.zeros((n_blocks, len(self.patterns)), dtype=bool)
        for n, block in enumerate(self.order):
            self.incidence[n, list(block.satisfied)] = True

        self.descendant_matrix = np.eye(n_blocks)
        for n, desc in enumerate(self.descendants):
            self.descendant_matrix[n, list(desc)] = 1.

        # column per (attribute, value) of the graph, for products of marginals over fixed attributes
        self.value_offsets = {}
        offset = 0
        for a, k in self.cardinalities.items():
            self.value_offsets[a] = offset
            offset += k
        self.value_incidence = np.zeros((n_blocks, offset))
        for n, block in enumerate(self.order):
            for a, v in block.assignments.items():
                self.value_incidence[n, self.value_offsets[a] + v] = 1.

    def block_of(self, row: Sequence[int]) -> TupleBlock:
        """
        Args:
            row (Sequence): tuple of value indices over the full schema

        Returns:
            TupleBlock: the block containing ``row``
        """
        key = tuple(n for n, p in enumerate(self.patterns) if indicator(p, row))
        try:
            return self.index[key]
        except KeyError:
            raise InternalConsistencyError(f'No block for indicator vector {key}')

    def validate(self, max_patterns_for_closures=12):
        """
        Check the graph against the brute-force order relation. Quadratic in blocks; meant for small graphs.

        Checks that every block is reachable from the root, that reachability equals the strict partial order,
        that each block key is the closure of its assignments, and (for few patterns) that every consistent
        combination of patterns has a block.

        Raises:
            InternalConsistencyError: any check fails
        """
        reachable = {self.root.key}
        stack = [self.root]
        while stack:
            for child in stack.pop().children.values():
                if child.key not in reachable:
                    reachable.add(child.key)
                    stack.append(child)
        if reachable != set(self.index):
            raise InternalConsistencyError(f'{len(set(self.index) - reachable)} blocks unreachable from root')

        for n, b in enumerate(self.order):
            if closure(b.assignments, self.patterns) != b.satisfied:
                raise InternalConsistencyError(f'{b} key is not the closure of its assignments')
            for m, d in enumerate(self.order):
                expected = m != n and partial_order_leq(b, d)
                if (m in self.descendants[n]) != expected:
                    raise InternalConsistencyError(f'Reachability of {d} from {b} is {not expected}, order says {expected}')

        if len(self.patterns) <= max_patterns_for_closures:
            for r in range(1, len(self.patterns) + 1):
                for subset in itertools.combinations(range(len(self.patterns)), r):
                    merged = _merge_patterns([self.patterns[i] for i in subset])
                    if merged is None:
                        continue
                    if tuple(sorted(closure(merged, self.patterns))) not in self.index:
                        raise InternalConsistencyError(f'Consistent pattern combination {subset} has no block')

    def describe(self, sizes: Optional[BlockSizes] = None) -> str:
        """
        Plain-text adjacency listing: key, fixed assignments, cum, size and children of each block.
        """
        sizes = compute_block_sizes(self) if sizes is None else sizes
        lines = []
        for n, b in enumerate(self.order):
            children = [list(c.key) for c in b.children.values()]
            lines.append(f'{list(b.key)} attrs={b.assignments} cum={sizes.cum[n]} size={sizes.size[n]} -> {children}')
        return '\n'.join(lines)

    def to_dot(self, sizes: Optional[BlockSizes] = None) -> str:
        sizes = compute_block_sizes(self) if sizes is None else sizes
        lines = ['digraph blocks {']
        for n, b in enumerate(self.order):
            label = '{' + ','.join(map(str, b.key)) + '}' + f'\\n{b.assignments}\\ncum={sizes.cum[n]} size={sizes.size[n]}'
            lines.append(f'  b{n} [label="{label}"];')
        for n, b in enumerate(self.order):
            for c in b.children.values():
                lines.append(f'  b{n} -> b{self.position[c.key]};')
        lines.append('}')
        return '\n'.join(lines)

    def __repr__(self):
        return f'BlockGraph({len(self.order)} blocks, {len(self.patterns)} patterns, attributes {self.attributes})'


def _merge_patterns(patterns: Sequence[Pattern]) -> Optional[Dict[int, int]]:
    # union of assignments, or None on conflict
    merged = {}
    for p in patterns:
        if not p.compatible_with(merged):
            return None
        merged.update(p.items)
    return merged


def build_block_graph(constraints: Sequence, cardinalities: Dict[int, int]) -> BlockGraph:
    return BlockGraph(constraints, cardinalities)


def compute_block_sizes(graph: BlockGraph) -> BlockSizes:
    """
    Exact block sizes by inclusion-exclusion.

    cum(B) is the number of tuples fixing attr(B); size(B) = cum(B) minus the sizes of all descendants.

    Raises:
        InternalConsistencyError: a size goes negative, or sizes do not sum to the tuple space size

    Returns:
        BlockSizes: Python ints aligned with ``graph.order``
    """
    cum, size = [], []
    for n, block in enumerate(graph.order):
        c = math.prod(k for a, k in graph.cardinalities.items() if a not in block.assignments)
        s = c - sum(size[m] for m in graph.descendants[n])
        if s < 0:
            raise InternalConsistencyError(f'Negative size {s} for {block}')
        cum.append(c)
        size.append(s)
    if sum(size) != graph.space_size:
        raise InternalConsistencyError(f'Block sizes sum to {sum(size)}, not {graph.space_size}')
    return BlockSizes(cum, size)


def compute_block_marginal_probs(graph: BlockGraph, marginals, atol=1e-6) -> np.ndarray:
    """
    Mass of each block under the independent model with the given attribute marginals.

    Same recursion as ``compute_block_sizes``, with cum(B) replaced by the product of the marginals of the values
    B fixes, solved as one unit lower-triangular system.

    Args:
        graph (BlockGraph): built graph
        marginals (list or dict): attribute index -> value probabilities, for every attribute of the graph
        atol (float, optional): tolerance on each marginal row sum. Defaults to 1e-6.

    Raises:
        ConstraintValidationError: a marginal row is not normalised
        InternalConsistencyError: a mass is negative beyond rounding

    Returns:
        np.ndarray: p_A(B) aligned with ``graph.order``, summing to 1
    """
    log_values = np.zeros(graph.value_incidence.shape[1])
    for a, offset in graph.value_offsets.items():
        row = np.asarray(marginals[a], dtype=float)
        if row.shape != (graph.cardinalities[a],) or np.any(row < 0) or abs(row.sum() - 1.) > atol:
            raise ConstraintValidationError(f'Marginal for attribute {a} is not a normalised distribution: {row}')
        with np.errstate(divide='ignore'):
            log_values[offset:offset + len(row)] = np.log(row)
    return block_masses_from_log_values(graph, log_values)


def block_masses_from_log_values(graph: BlockGraph, log_values: np.ndarray) -> np.ndarray:
    # log_values: log marginal per (attribute, value) column of graph.value_incidence
    with np.errstate(invalid='ignore'):
        cum = np.exp(graph.value_incidence @ np.where(np.isfinite(log_values), log_values, 0.))
    unsupported = graph.value_incidence @ (~np.isfinite(log_values)).astype(float) > 0
    cum[unsupported] = 0.
    masses = linalg.solve_triangular(graph.descendant_matrix, cum, lower=True, unit_diagonal=True, check_finite=False)
    if np.any(masses < -NEGATIVE_MASS_TOLERANCE):
        raise InternalConsistencyError(f'Negative block mass {masses.min()}')
    return np.maximum(masses, 0.)
