import argparse
import logging
import os

import pandas as pd
from tqdm import tqdm

from catmaxent.evaluation import metrics
from catmaxent.shared import benchmark_datasets, save_data
from catmaxent.training import iterative_scaling, model_selection


if __name__ == '__main__':

    """
    Compare the selected (heuristic) model, the model of every candidate (full) and the independent baseline
    on synthetic benchmarks with planted patterns. One row per seed and model.
    See run_benchmarks.sh for the args used.
    """
    parser = argparse.ArgumentParser()
    parser.add_argument('--save-dir', dest='save_dir', type=str, required=True)
    parser.add_argument('--seeds', dest='seeds', type=int, default=5)
    parser.add_argument('--full-scale', dest='full_scale', default=False, action='store_true')
    parser.add_argument('--n-attributes', dest='n_attributes', type=int, default=None)
    parser.add_argument('--n-patterns', dest='n_patterns', type=int, default=None)
    parser.add_argument('--n-rows', dest='n_rows', type=int, default=None)
    parser.add_argument('--n-samples', dest='n_samples', type=int, default=1000)
    parser.add_argument('--threads', dest='threads', type=int, default=1)
    parser.add_argument('--timing', default=False, action='store_true')
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s: %(message)s')

    overrides = {
        key: value for key, value in {
            'n_attributes': args.n_attributes, 'n_patterns': args.n_patterns, 'n_rows': args.n_rows
        }.items() if value is not None
    }
    make_config = benchmark_datasets.BenchmarkConfig.full_scale if args.full_scale else benchmark_datasets.BenchmarkConfig
    config = make_config(**overrides)
    logging.info(f'Benchmark config: {config}')
    fit_options = iterative_scaling.FitOptions(threads=args.threads)

    os.makedirs(args.save_dir, exist_ok=True)
    kl_rows = []
    timing_tables = []
    for seed in tqdm(range(args.seeds), desc='seeds'):
        benchmark = benchmark_datasets.generate_benchmark(config, seed)
        schema, dataset = benchmark.schema, benchmark.dataset
        marginals = benchmark.empirical_marginals

        selected, heuristic, trace = model_selection.select(
            schema, benchmark.candidates, marginals, len(dataset),
            model_selection.SelectionOptions(threads=args.threads, fit_options=fit_options)
        )
        full, _ = iterative_scaling.fit(schema, benchmark.candidates, marginals, fit_options)
        baseline = metrics.baseline_independent_model(schema, marginals)

        patterns = metrics.evaluation_patterns(benchmark.candidates, schema, include_attributes=True)
        table = metrics.kl_table(
            {'heuristic': heuristic, 'full': full, 'baseline': baseline},
            dataset, patterns, n_samples=args.n_samples, seed=seed
        )
        planted_found = sum(benchmark.is_planted[n] for n in selected)
        logging.info(f'Seed {seed}: selected {len(selected)} patterns, {planted_found} of them planted\n{table}')
        for model_name in table.columns:
            kl_rows.append({
                'seed': seed,
                'model': model_name,
                'kl_model': table.loc['KL(p*, p_ref)', model_name],
                'kl_sample': table.loc['KL(p~, p_ref)', model_name],
                'selected': len(selected) if model_name == 'heuristic' else None,
                'planted_selected': planted_found if model_name == 'heuristic' else None
            })
        save_data.save_table(trace.to_dataframe(), os.path.join(args.save_dir, f'trace_seed_{seed}.csv'))

        if args.timing:
            timing = metrics.timing_report(schema, benchmark.candidates, marginals, len(dataset),
                                           n_samples=args.n_samples, seed=seed, fit_options=fit_options)
            timing_tables.append(timing.assign(seed=seed).reset_index().rename(columns={'index': 'model'}))

    results = pd.DataFrame(kl_rows)
    save_data.save_table(results, os.path.join(args.save_dir, 'kl.csv'))
    logging.info(results.groupby('model')[['kl_model', 'kl_sample']].agg(['mean', 'std']))
    if timing_tables:
        timings = pd.concat(timing_tables, ignore_index=True)
        save_data.save_table(timings, os.path.join(args.save_dir, 'timing.csv'))
        logging.info(timings.groupby('model')[['t_pre', 't_infer', 't_sample']].mean())
