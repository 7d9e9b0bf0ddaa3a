import csv
import json
import logging
from pathlib import Path

import h5py
import numpy as np
import pandas as pd

from catmaxent.estimators.define_model import MaxEntModel
from catmaxent.shared.load_data import FORMAT_VERSION, MODEL_FORMAT, SPEC_FORMAT, ConstraintSpec
from catmaxent.shared.schemas import Schema, TupleDataset


def schema_to_dict(schema: Schema) -> dict:
    return {'attributes': [{'name': a.name, 'values': list(a.values)} for a in schema.attributes]}


def write_dataset(dataset: TupleDataset, save_loc, compression='gzip'):
    """
    Write a dataset as labels (.csv, .parquet) or as value indices with the schema alongside (.hdf5).
    """
    save_loc = str(save_loc)
    logging.info(f'Saving {len(dataset)} rows to {save_loc}')
    suffix = Path(save_loc).suffix
    if suffix == '.csv':
        dataset.to_dataframe().to_csv(save_loc, index=False, quoting=csv.QUOTE_MINIMAL, lineterminator='\n')
    elif suffix == '.parquet':
        dataset.to_dataframe().to_parquet(save_loc, index=False)
    elif suffix in ('.hdf5', '.h5'):
        with h5py.File(save_loc, 'w') as f:
            f.create_dataset(name='rows', data=np.asarray(dataset.rows), compression=compression)
            f.create_dataset(name='schema', data=json.dumps(schema_to_dict(dataset.schema)), dtype=h5py.string_dtype(encoding='utf-8'))
    else:
        raise ValueError(f'Unknown dataset format {suffix}, expected .csv, .parquet or .hdf5')


def spec_to_dict(spec: ConstraintSpec) -> dict:
    schema = spec.schema
    data = {'format': SPEC_FORMAT, 'schema': schema_to_dict(schema)}
    if spec.marginals is not None:
        data['marginals'] = {
            a.name: {label: float(p) for label, p in zip(a.values, row)}
            for a, row in zip(schema.attributes, spec.marginals)
        }
    data['patterns'] = [{'assignments': c.pattern.to_labels(schema), 'target': c.target_prob} for c in spec.constraints]
    metadata = dict(spec.metadata)
    if spec.n_rows is not None:
        metadata['n_rows'] = int(spec.n_rows)
    data['metadata'] = metadata
    return data


def write_constraint_spec(spec: ConstraintSpec, save_loc):
    logging.info(f'Saving constraint spec to {save_loc}')
    Path(save_loc).write_text(json.dumps(spec_to_dict(spec), indent=2) + '\n', encoding='utf-8')


def model_to_dict(model: MaxEntModel) -> dict:
    """
    Self-describing dict of a model. Floats are kept as Python floats, which json writes in shortest round-trip form.
    """
    schema = model.schema
    return {
        'format': MODEL_FORMAT,
        'version': FORMAT_VERSION,
        'schema': schema_to_dict(schema),
        'constraints': [{'assignments': c.pattern.to_labels(schema), 'target': c.target_prob} for c in model.constraints],
        'components': [
            {'constraints': list(comp.constraint_indices), 'log_u': [float(x) for x in comp.log_u]}
            for comp in model.components
        ],
        'marginals_active': model.marginals_active,
        'log_v': [[float(x) for x in row] for row in model.log_v] if model.marginals_active else None,
        'marginal_targets': None if model.marginal_targets is None else [[float(x) for x in row] for row in model.marginal_targets]
    }


def save_model(model: MaxEntModel, save_loc):
    logging.info(f'Saving model to {save_loc}')
    Path(save_loc).write_text(json.dumps(model_to_dict(model), indent=2) + '\n', encoding='utf-8')


def save_table(df: pd.DataFrame, save_loc, index=False):
    # trace and metric tables: csv, or parquet by suffix
    save_loc = str(save_loc)
    logging.info(f'Saving table to {save_loc}')
    if save_loc.endswith('.parquet'):
        df.to_parquet(save_loc, index=index)
    else:
        df.to_csv(save_loc, index=index)
