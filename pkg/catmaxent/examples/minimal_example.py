import logging

import numpy as np
import pandas as pd

from catmaxent.evaluation import metrics
from catmaxent.predictions.sample import SampleSpec, sample
from catmaxent.shared import load_data
from catmaxent.shared.schemas import clamp_marginals, marginal_frequencies, parse_pattern
from catmaxent.training import model_selection


if __name__ == '__main__':

    """
    Minimal example: fit a maximum entropy model to a small census-like table, then sample from it.
    No arguments are required.

    The table is generated here, with age and tenure correlated and everything else independent.
    Selection should keep pairs of age and tenure, and leave sex alone.

    See benchmarks/run_benchmark.py for the larger synthetic benchmark.
    """
    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s: %(message)s')

    rng = np.random.default_rng(42)
    n_rows = 5000
    age = rng.choice(['0-15', '16-64', '65+'], size=n_rows, p=[0.2, 0.6, 0.2])
    own_prob = np.select([age == '0-15', age == '16-64'], [0.5, 0.55], default=0.85)
    tenure = np.where(rng.random(n_rows) < own_prob, 'own', 'rent')
    sex = rng.choice(['F', 'M'], size=n_rows)
    df = pd.DataFrame({'sex': sex, 'age': age, 'tenure': tenure})

    dataset = load_data.dataframe_to_dataset(df)
    schema = dataset.schema
    logging.info(f'Schema: {schema}')

    # every observed value pair is a candidate
    candidates = load_data.constraints_from_dataset(dataset, load_data.pairwise_patterns(dataset, include_single=False))
    marginals = clamp_marginals(marginal_frequencies(dataset))

    selected, model, trace = model_selection.select(schema, candidates, marginals, n_rows)
    for n in selected:
        logging.info(f'Selected {candidates[n].pattern.describe(schema)} at {candidates[n].target_prob:.3f}')
    logging.info(f'Stop reason: {trace.stop_reason}')

    pattern = parse_pattern('age=65+,tenure=own', schema)
    logging.info(f'p(age=65+, tenure=own): model {model.query(pattern):.4f}, data {np.mean((age == "65+") & (tenure == "own")):.4f}')

    synthetic = sample(model, SampleSpec(n=n_rows, seed=0))
    logging.info(synthetic.to_dataframe().head())

    patterns = metrics.evaluation_patterns(candidates, schema, include_attributes=True)
    baseline = metrics.baseline_independent_model(schema, marginals)
    logging.info(f'Approx. KL to data: model {metrics.approx_kl(model, dataset, patterns):.5f}, '
                 f'independent baseline {metrics.approx_kl(baseline, dataset, patterns):.5f}')
