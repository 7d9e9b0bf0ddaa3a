import itertools
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import h5py
import numpy as np
import pandas as pd

from catmaxent.estimators.define_model import Component, MaxEntModel
from catmaxent.shared.errors import (
    CatMaxEntError,
    EmptyInputError,
    IngestionError,
)
from catmaxent.shared.schemas import (
    Attribute,
    Pattern,
    PatternConstraint,
    Schema,
    TupleDataset,
    empirical_frequency,
    validate_constraints,
)


SPEC_FORMAT = 'catmaxent-spec'
MODEL_FORMAT = 'catmaxent-model'
FORMAT_VERSION = 1
MARGINAL_SUM_TOLERANCE = 1e-6


def bin_numeric_columns(df: pd.DataFrame, bins: Dict[str, object]) -> pd.DataFrame:
    """
    Replace numeric columns by range labels, so continuous attributes can be modelled as categorical.

    Args:
        df (pd.DataFrame): raw table
        bins (dict): column -> number of equal-width bins, or explicit bin edges (passed to ``pandas.cut``)

    Returns:
        pd.DataFrame: copy of ``df`` with those columns as string labels like '(0.0, 15.0]'
    """
    df = df.copy()
    for col, edges in bins.items():
        if col not in df.columns:
            raise IngestionError(f'Cannot bin missing column {col}', column=col)
        values = pd.to_numeric(df[col], errors='coerce')
        if values.isna().any():
            bad = int(np.flatnonzero(values.isna().values)[0])
            raise IngestionError(f'Non-numeric value {df[col].iloc[bad]!r} in binned column', line=bad + 2, column=col)
        df[col] = pd.cut(values, bins=edges, include_lowest=True).astype(str)
    return df


def infer_schema(df: pd.DataFrame, path=None) -> Schema:
    """
    Schema whose values are the sorted distinct labels of each column.
    """
    attributes = []
    for col in df.columns:
        values = sorted(df[col].unique())
        if len(values) < 2:
            raise IngestionError(f'Column takes a single value {values}; attributes need at least two', path=path, column=col)
        attributes.append(Attribute(col, values))
    return Schema(attributes)


def read_microdata_csv(path, schema: Optional[Schema] = None, bins: Optional[Dict[str, object]] = None) -> TupleDataset:
    """
    Read a CSV of value labels with a header of attribute names.

    Args:
        path (str): csv location
        schema (Schema, optional): labels to map onto. Inferred from the file if None.
        bins (dict, optional): numeric columns to bin first, see ``bin_numeric_columns``

    Raises:
        IngestionError: empty file, ragged row, missing column, or label not in the schema (naming row and column)

    Returns:
        TupleDataset: rows as value indices
    """
    df = _read_label_csv(path)
    if bins:
        df = bin_numeric_columns(df, bins)
    return dataframe_to_dataset(df, schema, path)


def _read_label_csv(path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, skipinitialspace=False)
    except pd.errors.EmptyDataError:
        raise IngestionError('File is empty', path=path, line=1)
    except pd.errors.ParserError as e:
        match = re.search(r'Expected (\d+) fields in line (\d+), saw (\d+)', str(e))
        if match:
            expected, line, saw = match.groups()
            raise IngestionError(f'Ragged row: expected {expected} fields, saw {saw}', path=path, line=int(line)) from e
        raise IngestionError(f'Could not parse csv: {e}', path=path) from e
    missing = df.isna()
    if missing.values.any():
        row, col = np.argwhere(missing.values)[0]
        raise IngestionError('Ragged row: missing field', path=path, line=int(row) + 2, column=df.columns[col])
    if len(df) == 0:
        raise IngestionError('File has a header but no rows', path=path, line=2)
    return df


def dataframe_to_dataset(df: pd.DataFrame, schema: Optional[Schema] = None, path=None) -> TupleDataset:
    df = df.astype(str)
    if schema is None:
        schema = infer_schema(df, path)
        logging.info(f'Inferred {schema} from {path}')
    missing = [name for name in schema.names if name not in df.columns]
    if missing:
        raise IngestionError(f'Missing columns {missing}', path=path, line=1, column=missing[0])
    rows = np.empty((len(df), schema.n_attributes), dtype=np.int64)
    for n, attribute in enumerate(schema.attributes):
        codes = pd.Categorical(df[attribute.name], categories=list(attribute.values)).codes
        unknown = np.flatnonzero(codes < 0)
        if len(unknown):
            cells = ', '.join(f'row {r + 2}: {df[attribute.name].iloc[r]!r}' for r in unknown[:10])
            raise IngestionError(f'{len(unknown)} label(s) not in schema for {attribute.name} ({cells})',
                                 path=path, line=int(unknown[0]) + 2, column=attribute.name)
        rows[:, n] = codes
    return TupleDataset(schema, rows)


def read_dataset(path, schema: Optional[Schema] = None) -> TupleDataset:
    """
    Read a dataset written by ``save_data.write_dataset``, choosing the format by suffix (.csv, .parquet, .hdf5).
    """
    suffix = Path(path).suffix
    if suffix == '.csv':
        return read_microdata_csv(path, schema)
    if suffix == '.parquet':
        return dataframe_to_dataset(pd.read_parquet(path), schema, path)
    if suffix in ('.hdf5', '.h5'):
        with h5py.File(path, 'r') as f:
            stored = schema_from_dict(json.loads(f['schema'][()]))
            rows = f['rows'][:]
        if schema is not None and schema != stored:
            raise IngestionError('Stored schema differs from the requested schema', path=path)
        return TupleDataset(stored, rows)
    raise IngestionError(f'Unknown dataset format {suffix}, expected .csv, .parquet or .hdf5', path=path)


def constraints_from_dataset(dataset: TupleDataset, patterns: Sequence[Pattern]) -> List[PatternConstraint]:
    """
    Constraint per pattern with its empirical frequency as target.
    Patterns at frequency 0 or 1 are dropped with a warning.

    Raises:
        EmptyInputError: dataset has no rows
    """
    if len(dataset) == 0:
        raise EmptyInputError('Cannot derive constraints from an empty dataset')
    constraints = []
    dropped = []
    for pattern in patterns:
        freq = empirical_frequency(dataset, pattern)
        if freq in (0., 1.):
            dropped.append((pattern.describe(dataset.schema), freq))
        else:
            constraints.append(PatternConstraint(pattern, freq))
    if dropped:
        logging.warning(f'Dropped {len(dropped)} pattern(s) at boundary frequency: {dropped}')
    return constraints


def enumerate_patterns(schema: Schema, attributes: Sequence[int]) -> List[Pattern]:
    # every instantiation of the attribute subset
    ranges = [range(schema.attributes[a].cardinality) for a in attributes]
    return [Pattern(dict(zip(attributes, values))) for values in itertools.product(*ranges)]


def pairwise_patterns(dataset: TupleDataset, include_single=True) -> List[Pattern]:
    """
    Every single-attribute and attribute-pair pattern observed at least once in ``dataset``.
    """
    schema = dataset.schema
    patterns = []
    orders = [1, 2] if include_single else [2]
    for order in orders:
        for attributes in itertools.combinations(range(schema.n_attributes), order):
            observed = np.unique(dataset.rows[:, list(attributes)], axis=0)
            patterns.extend(Pattern(dict(zip(attributes, row.tolist()))) for row in observed)
    return patterns


class _LocatedDict(dict):
    position = 0  # character offset of the opening brace


def _brace_offsets(text: str) -> List[int]:
    # opening offset of every JSON object, in the order the objects close
    offsets, stack = [], []
    in_string, escaped = False, False
    for n, char in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif char == '\\':
                escaped = True
            elif char == '"':
                in_string = False
        elif char == '"':
            in_string = True
        elif char == '{':
            stack.append(n)
        elif char == '}':
            offsets.append(stack.pop())
    return offsets


def _load_located(text: str):
    """
    ``json.loads`` where every object is a _LocatedDict knowing its offset in ``text``.

    object_pairs_hook runs as each object closes, the same order ``_brace_offsets`` reports them in.

    Raises:
        json.JSONDecodeError: invalid JSON
    """
    created = []

    def hook(pairs):
        created.append(_LocatedDict(pairs))
        return created[-1]

    root = json.loads(text, object_pairs_hook=hook)
    for obj, offset in zip(created, _brace_offsets(text)):
        obj.position = offset
    return root


@dataclass
class ConstraintSpec():
    schema: Schema
    constraints: List[PatternConstraint]
    marginals: Optional[List[np.ndarray]] = None
    n_rows: Optional[int] = None
    metadata: Dict = field(default_factory=dict)


class _SpecParser():

    def __init__(self, text: str, path):
        self.text = text
        self.path = path

    def error(self, message, node=None):
        if isinstance(node, _LocatedDict):
            line = self.text.count('\n', 0, node.position) + 1
            column = node.position - (self.text.rfind('\n', 0, node.position) + 1) + 1
            return IngestionError(message, path=self.path, line=line, column=column)
        return IngestionError(message, path=self.path)

    def require(self, node, key, kind, where):
        if not isinstance(node, dict) or key not in node:
            raise self.error(f'{where}: missing "{key}"', node)
        if not isinstance(node[key], kind):
            raise self.error(f'{where}: "{key}" must be {kind.__name__ if isinstance(kind, type) else kind}', node)
        return node[key]

    def parse(self) -> ConstraintSpec:
        try:
            root = _load_located(self.text)
        except json.JSONDecodeError as e:
            raise IngestionError(f'Invalid JSON: {e.msg}', path=self.path, line=e.lineno, column=e.colno) from e
        if not isinstance(root, dict):
            raise self.error('Top level must be an object')
        if root.get('format', SPEC_FORMAT) != SPEC_FORMAT:
            raise self.error(f'Format is {root.get("format")}, expected {SPEC_FORMAT}', root)
        options = root.get('options', {})
        complete = bool(options.get('complete_marginals', False))
        other_label = str(options.get('other_label', 'other'))
        clamp = bool(options.get('clamp_boundaries', False))

        schema_node = self.require(root, 'schema', dict, 'spec')
        attribute_nodes = self.require(schema_node, 'attributes', list, 'schema')
        attributes = []
        for n, node in enumerate(attribute_nodes):
            name = self.require(node, 'name', str, f'schema.attributes[{n}]')
            values = self.require(node, 'values', list, f'schema.attributes[{n}]')
            try:
                attributes.append(Attribute(name, values))
            except CatMaxEntError as e:
                raise self.error(str(e), node) from e
        try:
            schema = Schema(attributes)
        except CatMaxEntError as e:
            raise self.error(str(e), schema_node) from e

        marginals = None
        if 'marginals' in root:
            schema, marginals = self.parse_marginals(root['marginals'], schema, complete, other_label)

        constraints = []
        for n, node in enumerate(root.get('patterns', [])):
            where = f'patterns[{n}]'
            assignments = self.require(node, 'assignments', dict, where)
            target = self.require(node, 'target', (int, float), where)
            try:
                constraints.append(PatternConstraint(Pattern.from_labels(schema, assignments), target, clamp=clamp))
            except CatMaxEntError as e:
                raise self.error(f'{where}: {e}', node) from e
        try:
            validate_constraints(constraints, schema)
        except CatMaxEntError as e:
            raise self.error(str(e), root) from e

        metadata = dict(root.get('metadata', {}))
        n_rows = metadata.get('n_rows')
        if n_rows is not None and (not isinstance(n_rows, int) or n_rows < 1):
            raise self.error('metadata.n_rows must be a positive integer', root.get('metadata'))
        return ConstraintSpec(schema, constraints, marginals, n_rows, metadata)

    def parse_marginals(self, node, schema: Schema, complete: bool, other_label: str):
        if not isinstance(node, dict):
            raise self.error('marginals must be an object of attribute -> {value: frequency}', node)
        missing = [name for name in schema.names if name not in node]
        if missing:
            raise self.error(f'marginals: attributes {missing} have no frequencies', node)
        rows = {}
        for name, freqs in node.items():
            if name not in schema.names:
                raise self.error(f'marginals: unknown attribute {name}', node)
            attribute = schema.get_attribute(name)
            if not isinstance(freqs, dict):
                raise self.error(f'marginals.{name} must be an object of value -> frequency', node)
            unknown = [v for v in freqs if v not in attribute.values]
            absent = [v for v in attribute.values if v not in freqs]
            if unknown or absent:
                raise self.error(f'marginals.{name}: unknown values {unknown}, values without frequency {absent}', freqs)
            row = np.array([freqs[v] for v in attribute.values], dtype=float)
            if np.any(row <= 0) or np.any(row >= 1):
                raise self.error(f'marginals.{name}: frequencies must be strictly inside (0, 1)', freqs)
            total = row.sum()
            if total > 1 + MARGINAL_SUM_TOLERANCE:
                raise self.error(f'marginals.{name} sums to {total} > 1', freqs)
            if total < 1 - MARGINAL_SUM_TOLERANCE:
                if not complete:
                    raise self.error(f'marginals.{name} sums to {total} < 1 (enable complete_marginals to add "{other_label}")', freqs)
                if other_label in attribute.values:
                    raise self.error(f'marginals.{name}: completion value "{other_label}" already exists', freqs)
                logging.warning(f'Completing marginal of {name} with "{other_label}" = {1 - total:.6g}')
                schema = schema.with_extra_value(name, other_label)
                row = np.append(row, 1. - total)
            rows[name] = row / row.sum()
        return schema, [rows[name] for name in schema.names]


def read_constraint_spec(path) -> ConstraintSpec:
    """
    Read a constraint specification (JSON with schema, marginals, patterns, metadata and options sections).
    See docs/guides/spec_format.rst for the format.

    Raises:
        IngestionError: parse or validation error, located by line and column

    Returns:
        ConstraintSpec: validated schema, constraints, marginals and n_rows
    """
    try:
        text = Path(path).read_text(encoding='utf-8')
    except OSError as e:
        raise IngestionError(f'Cannot read: {e}', path=path) from e
    if not text.strip():
        raise IngestionError('File is empty', path=path, line=1)
    return _SpecParser(text, path).parse()


def schema_from_dict(data) -> Schema:
    return Schema([Attribute(node['name'], node['values']) for node in data['attributes']])


def load_model(path):
    """
    Read a model written by ``save_data.save_model``. Block graphs are rebuilt from the constraints.

    Raises:
        IngestionError: unreadable file or unknown format version

    Returns:
        MaxEntModel: the model
    """
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise IngestionError(f'Invalid JSON: {e.msg}', path=path, line=e.lineno, column=e.colno) from e
    except OSError as e:
        raise IngestionError(f'Cannot read: {e}', path=path) from e
    if not isinstance(data, dict) or data.get('format') != MODEL_FORMAT or data.get('version') != FORMAT_VERSION:
        raise IngestionError(f'Not a {MODEL_FORMAT} v{FORMAT_VERSION} file', path=path)
    try:
        schema = schema_from_dict(data['schema'])
        constraints = [PatternConstraint(Pattern.from_labels(schema, c['assignments']), c['target']) for c in data['constraints']]
        components = [
            Component(c['constraints'], [constraints[n].pattern for n in c['constraints']], schema, log_u=c['log_u'])
            for c in data['components']
        ]
        log_v = None if data['log_v'] is None else [np.array(row) for row in data['log_v']]
        targets = None if data['marginal_targets'] is None else [np.array(row) for row in data['marginal_targets']]
    except (KeyError, TypeError, CatMaxEntError) as e:
        raise IngestionError(f'Malformed model file: {e}', path=path) from e
    logging.info(f'Loaded model from {path}')
    return MaxEntModel(schema, constraints, components, log_v=log_v, marginal_targets=targets)
