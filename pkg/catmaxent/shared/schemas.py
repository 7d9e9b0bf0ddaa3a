import logging
import math
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from catmaxent.shared.errors import (
    ConstraintValidationError,
    EmptyInputError,
    SchemaMismatchError,
)


BOUNDARY_EPSILON = 1e-9


class Attribute():

    def __init__(self, name: str, values: Sequence[str]):
        """
        Class representing one categorical attribute and its ordered value labels.

        Values are referred to by their position in ``values`` everywhere except the I/O layer.

        Args:
            name (str): e.g. 'age'
            values (Sequence): value labels e.g. ['0-15', '16-64', '65+']
        """
        self.name = str(name)
        self.values = tuple(str(v) for v in values)
        if len(self.values) < 2:
            raise SchemaMismatchError(f'Attribute {self.name} needs at least two values, got {self.values}')
        if len(set(self.values)) != len(self.values):
            raise SchemaMismatchError(f'Attribute {self.name} has duplicate value labels: {self.values}')
        self._index = {v: n for n, v in enumerate(self.values)}

    @property
    def cardinality(self):
        return len(self.values)

    def index_of(self, label: str) -> int:
        """
        Args:
            label (str): value label e.g. '16-64'

        Raises:
            SchemaMismatchError: label not in this attribute's range

        Returns:
            int: position of label in ``values``
        """
        try:
            return self._index[str(label)]
        except KeyError:
            raise SchemaMismatchError(f'Value {label} not found for attribute {self.name}: {self.values}')

    def __eq__(self, other):
        return isinstance(other, Attribute) and (self.name, self.values) == (other.name, other.values)

    def __hash__(self):
        return hash((self.name, self.values))

    def __repr__(self):
        return f'{self.name}, {self.cardinality} values'


class Schema():

    def __init__(self, attributes: Sequence[Attribute]):
        """
        Ordered attribute set defining the categorical tuple space.

        Tuples are vectors of value indices aligned with ``attributes``.
        The tuple space size is kept as a Python int, so it never overflows.

        Args:
            attributes (Sequence): of Attribute, in column order
        """
        self.attributes = list(attributes)
        if len(self.attributes) == 0:
            raise SchemaMismatchError('Schema needs at least one attribute')
        self.names = [a.name for a in self.attributes]
        if len(set(self.names)) != len(self.names):
            raise SchemaMismatchError(f'Attribute names must be unique: {self.names}')
        self._index = {name: n for n, name in enumerate(self.names)}

    @classmethod
    def from_dict(cls, attribute_values: Dict[str, Sequence[str]]):
        """
        Args:
            attribute_values (dict): e.g. {'sex': ['F', 'M'], 'age': ['0-15', '16-64', '65+']}

        Returns:
            Schema: with attributes in dict order
        """
        return cls([Attribute(name, values) for name, values in attribute_values.items()])

    def to_dict(self) -> Dict[str, List[str]]:
        return {a.name: list(a.values) for a in self.attributes}

    @property
    def n_attributes(self):
        return len(self.attributes)

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([a.cardinality for a in self.attributes], dtype=np.int64)

    @property
    def space_size(self) -> int:
        # exact, arbitrary precision
        return math.prod(a.cardinality for a in self.attributes)

    @property
    def log_space_size(self) -> float:
        return float(np.sum(np.log(self.cardinalities)))

    def attribute_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaMismatchError(f'Attribute not found: {name}. Known attributes: {self.names}')

    def get_attribute(self, name: str) -> Attribute:
        return self.attributes[self.attribute_index(name)]

    def check_attribute_index(self, attribute: int):
        if not 0 <= attribute < self.n_attributes:
            raise SchemaMismatchError(f'Attribute index {attribute} outside schema of {self.n_attributes} attributes')

    def encode_row(self, labels: Sequence[str]) -> Tuple[int, ...]:
        if len(labels) != self.n_attributes:
            raise SchemaMismatchError(f'Row has {len(labels)} values, schema has {self.n_attributes} attributes')
        return tuple(a.index_of(label) for a, label in zip(self.attributes, labels))

    def decode_row(self, row: Sequence[int]) -> List[str]:
        return [a.values[int(v)] for a, v in zip(self.attributes, row)]

    def with_extra_value(self, name: str, label: str) -> 'Schema':
        """
        Copy of this schema with ``label`` appended to the values of attribute ``name``.
        Used to complete marginals which sum to less than one.
        """
        attributes = []
        for a in self.attributes:
            if a.name == name:
                attributes.append(Attribute(a.name, list(a.values) + [label]))
            else:
                attributes.append(a)
        return Schema(attributes)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.attributes == other.attributes

    def __hash__(self):
        return hash(tuple(self.attributes))

    def __repr__(self):
        return f'Schema({self.n_attributes} attributes, |S|={self.space_size})'


class Pattern():

    def __init__(self, assignments: Dict[int, int]):
        """
        A pattern instantiation: values fixed on a nonempty subset of attributes.

        Stored as attribute-sorted ``(attribute, value)`` pairs of indices, so equal patterns hash equal.

        Args:
            assignments (dict): attribute index -> value index e.g. {0: 1, 3: 0}
        """
        items = tuple(sorted((int(a), int(v)) for a, v in dict(assignments).items()))
        if len(items) == 0:
            raise ConstraintValidationError('A pattern must assign at least one attribute')
        if any(a < 0 or v < 0 for a, v in items):
            raise SchemaMismatchError(f'Negative index in pattern {items}')
        self.items = items

    @property
    def attributes(self) -> Tuple[int, ...]:
        return tuple(a for a, _ in self.items)

    @property
    def values(self) -> Tuple[int, ...]:
        return tuple(v for _, v in self.items)

    def as_dict(self) -> Dict[int, int]:
        return dict(self.items)

    def __len__(self):
        return len(self.items)

    def validate(self, schema: Schema):
        for a, v in self.items:
            schema.check_attribute_index(a)
            if v >= schema.attributes[a].cardinality:
                raise SchemaMismatchError(
                    f'Value index {v} out of range for attribute {schema.names[a]} ({schema.attributes[a].cardinality} values)')

    def restrict(self, attributes: Iterable[int]) -> Dict[int, int]:
        keep = set(attributes)
        return {a: v for a, v in self.items if a in keep}

    def compatible_with(self, assignments: Dict[int, int]) -> bool:
        return all(assignments.get(a, v) == v for a, v in self.items)

    def contained_in(self, assignments: Dict[int, int]) -> bool:
        return all(assignments.get(a, -1) == v for a, v in self.items)

    def to_labels(self, schema: Schema) -> Dict[str, str]:
        return {schema.names[a]: schema.attributes[a].values[v] for a, v in self.items}

    @classmethod
    def from_labels(cls, schema: Schema, labels: Dict[str, str]) -> 'Pattern':
        assignments = {}
        for name, label in labels.items():
            a = schema.attribute_index(name)
            assignments[a] = schema.attributes[a].index_of(label)
        return cls(assignments)

    def describe(self, schema: Schema) -> str:
        return ','.join(f'{k}={v}' for k, v in self.to_labels(schema).items())

    def __eq__(self, other):
        return isinstance(other, Pattern) and self.items == other.items

    def __hash__(self):
        return hash(self.items)

    def __repr__(self):
        return 'Pattern({})'.format(', '.join(f'A{a}={v}' for a, v in self.items))


def parse_pattern(expression: str, schema: Schema) -> Pattern:
    """
    Parse ``attr=value,attr=value`` into a Pattern.

    Args:
        expression (str): e.g. 'sex=F,age=16-64'
        schema (Schema): schema defining the labels

    Raises:
        ConstraintValidationError: malformed expression or repeated attribute
        SchemaMismatchError: unknown attribute or value

    Returns:
        Pattern: parsed pattern
    """
    labels = {}
    for part in expression.split(','):
        if '=' not in part:
            raise ConstraintValidationError(f'Expected attr=value, got "{part}" in "{expression}"')
        name, _, label = part.partition('=')
        name, label = name.strip(), label.strip()
        if not name or not label:
            raise ConstraintValidationError(f'Empty attribute or value in "{expression}"')
        if name in labels:
            raise ConstraintValidationError(f'Attribute {name} assigned twice in "{expression}"')
        labels[name] = label
    return Pattern.from_labels(schema, labels)


class PatternConstraint():

    def __init__(self, pattern: Pattern, target_prob: float, clamp: bool = False):
        """
        A pattern with the probability the fitted distribution must give it.

        Args:
            pattern (Pattern): constrained pattern
            target_prob (float): target probability, strictly inside (0, 1)
            clamp (bool, optional): clamp boundary targets to [eps, 1-eps] instead of raising. Defaults to False.

        Raises:
            ConstraintValidationError: target outside (0, 1) and clamp is False
        """
        target_prob = float(target_prob)
        if not 0. <= target_prob <= 1. or np.isnan(target_prob):
            raise ConstraintValidationError(f'Target {target_prob} for {pattern} is not a probability')
        if target_prob in (0., 1.):
            if not clamp:
                raise ConstraintValidationError(
                    f'Target {target_prob} for {pattern} is on the boundary; '
                    'such constraints force infinite parameters (enable clamping to override)')
            logging.warning(f'Clamping boundary target {target_prob} for {pattern}')
            target_prob = min(max(target_prob, BOUNDARY_EPSILON), 1. - BOUNDARY_EPSILON)
        self.pattern = pattern
        self.target_prob = target_prob

    def __eq__(self, other):
        return isinstance(other, PatternConstraint) and (self.pattern, self.target_prob) == (other.pattern, other.target_prob)

    def __hash__(self):
        return hash((self.pattern, self.target_prob))

    def __repr__(self):
        return f'{self.pattern}: {self.target_prob}'


def validate_constraints(constraints: Sequence[PatternConstraint], schema: Schema):
    """
    Check every pattern fits ``schema`` and no pattern appears twice.

    Raises:
        SchemaMismatchError: a pattern does not fit the schema
        ConstraintValidationError: duplicate patterns
    """
    seen = {}
    for n, c in enumerate(constraints):
        c.pattern.validate(schema)
        if c.pattern in seen:
            raise ConstraintValidationError(
                f'Duplicate pattern {c.pattern.describe(schema)} at positions {seen[c.pattern]} and {n}')
        seen[c.pattern] = n


def validate_marginals(marginals: Sequence[np.ndarray], schema: Schema, atol=1e-9) -> List[np.ndarray]:
    """
    Check per-attribute marginal tables are strictly positive and normalised.

    Args:
        marginals (Sequence): one array of value probabilities per attribute
        schema (Schema): schema the marginals refer to
        atol (float, optional): tolerance on each row sum. Defaults to 1e-9.

    Raises:
        ConstraintValidationError: wrong shape, non-positive entry, or row not summing to 1

    Returns:
        list: marginals as float arrays
    """
    if len(marginals) != schema.n_attributes:
        raise ConstraintValidationError(f'Expected marginals for {schema.n_attributes} attributes, got {len(marginals)}')
    checked = []
    for attribute, row in zip(schema.attributes, marginals):
        row = np.asarray(row, dtype=float)
        if row.shape != (attribute.cardinality,):
            raise ConstraintValidationError(f'Marginal for {attribute.name} has shape {row.shape}, expected ({attribute.cardinality},)')
        if np.any(row <= 0) or np.any(row >= 1):
            raise ConstraintValidationError(f'Marginal for {attribute.name} has entries outside (0, 1): {row}')
        if abs(row.sum() - 1.) > atol:
            raise ConstraintValidationError(f'Marginal for {attribute.name} sums to {row.sum()}, not 1')
        checked.append(row)
    return checked


class TupleDataset():

    def __init__(self, schema: Schema, rows):
        """
        Multiset of categorical tuples, stored as a (row, attribute) int array of value indices.

        Args:
            schema (Schema): schema of every row
            rows (array-like): shape (n_rows, n_attributes)

        Raises:
            SchemaMismatchError: wrong width or value index out of range
        """
        rows = np.asarray(rows, dtype=np.int64)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, schema.n_attributes)
        if rows.ndim != 2 or rows.shape[1] != schema.n_attributes:
            raise SchemaMismatchError(f'Rows of shape {rows.shape} do not match schema with {schema.n_attributes} attributes')
        out_of_range = (rows < 0) | (rows >= schema.cardinalities[np.newaxis, :])
        if np.any(out_of_range):
            row, col = np.argwhere(out_of_range)[0]
            raise SchemaMismatchError(f'Value index {rows[row, col]} out of range at row {row}, attribute {schema.names[col]}')
        rows.setflags(write=False)
        self.schema = schema
        self.rows = rows

    def __len__(self):
        return len(self.rows)

    def to_dataframe(self):
        return pd.DataFrame({
            name: np.asarray(attribute.values, dtype=object)[self.rows[:, n]]
            for n, (name, attribute) in enumerate(zip(self.schema.names, self.schema.attributes))
        }, columns=self.schema.names)

    def __repr__(self):
        return f'TupleDataset({len(self)} rows, {self.schema})'


def indicator(pattern: Pattern, row: Sequence[int]) -> int:
    """
    1 if ``row`` takes the pattern's value on every assigned attribute, else 0.

    Raises:
        SchemaMismatchError: pattern assigns an attribute beyond the row
    """
    for a, v in pattern.items:
        if a >= len(row):
            raise SchemaMismatchError(f'Pattern attribute {a} outside tuple of length {len(row)}')
        if row[a] != v:
            return 0
    return 1


def pattern_mask(pattern: Pattern, rows: np.ndarray) -> np.ndarray:
    # vectorised indicator over rows
    attributes = np.array(pattern.attributes)
    if attributes.max() >= rows.shape[1]:
        raise SchemaMismatchError(f'Pattern {pattern} outside tuples of length {rows.shape[1]}')
    return np.all(rows[:, attributes] == np.array(pattern.values)[np.newaxis, :], axis=1)


def empirical_frequency(dataset: TupleDataset, pattern: Pattern) -> float:
    """
    Fraction of dataset rows containing ``pattern``.

    Raises:
        EmptyInputError: dataset has no rows
    """
    if len(dataset) == 0:
        raise EmptyInputError('Cannot compute empirical frequency of an empty dataset')
    pattern.validate(dataset.schema)
    return float(pattern_mask(pattern, dataset.rows).mean())


def marginal_frequencies(dataset: TupleDataset) -> List[np.ndarray]:
    if len(dataset) == 0:
        raise EmptyInputError('Cannot compute marginals of an empty dataset')
    return [
        np.bincount(dataset.rows[:, n], minlength=k) / len(dataset)
        for n, k in enumerate(dataset.schema.cardinalities)
    ]


def clamp_marginals(marginals: Sequence[np.ndarray], epsilon=BOUNDARY_EPSILON) -> List[np.ndarray]:
    """
    Lift zero (or one) marginal entries to ``epsilon`` and renormalise.
    Empirical marginals hit the boundary when a value is unobserved.
    """
    clamped = []
    for n, row in enumerate(marginals):
        row = np.asarray(row, dtype=float)
        if np.any(row < epsilon):
            logging.warning(f'Clamping {np.sum(row < epsilon)} marginal value(s) of attribute {n} to {epsilon}')
            row = np.maximum(row, epsilon)
            row = row / row.sum()
        clamped.append(row)
    return clamped
