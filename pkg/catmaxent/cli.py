"""
Command line front end: fit, select, sample, query, evaluate and benchmark.

Exit codes: 0 success, 2 usage, 3 ingestion (bad input files or data), 4 non-convergence,
5 internal consistency, 6 sampling.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from catmaxent.evaluation import metrics
from catmaxent.predictions.sample import SampleSpec, sample
from catmaxent.shared import benchmark_datasets, load_data, save_data
from catmaxent.shared.errors import (
    CatMaxEntError,
    FitError,
    IngestionError,
    InternalConsistencyError,
    SamplingError,
)
from catmaxent.shared.schemas import Pattern, clamp_marginals, marginal_frequencies, parse_pattern
from catmaxent.training import iterative_scaling, model_selection


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGESTION = 3
EXIT_NON_CONVERGENCE = 4
EXIT_INTERNAL = 5
EXIT_SAMPLING = 6


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f'must be a positive integer, got {value}')
    return value


def positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f'must be positive, got {value}')
    return value


def resolve_seed(seed):
    # every randomised command is reproducible: print any generated seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
        print(f'seed: {seed}')
    return seed


def fit_options_from_args(args) -> iterative_scaling.FitOptions:
    return iterative_scaling.FitOptions(
        tolerance=args.tolerance,
        max_sweeps=args.max_sweeps,
        threads=args.threads,
        validate_graph=args.validate_graph
    )


def cmd_fit(args) -> int:
    spec = load_data.read_constraint_spec(args.spec)
    model, report = iterative_scaling.fit(spec.schema, spec.constraints, spec.marginals, fit_options_from_args(args))
    save_data.save_model(model, args.out)
    print(report.summary())
    if args.report:
        save_data.save_table(pd.DataFrame([{
            'iterations': report.iterations,
            'max_residual': report.max_residual,
            'converged': report.converged,
            'seconds': sum(report.component_seconds),
            'blocks': sum(report.component_blocks)
        }]), args.report)
    return EXIT_OK


def cmd_select(args) -> int:
    spec = load_data.read_constraint_spec(args.spec)
    n_rows = args.n_rows if args.n_rows is not None else spec.n_rows
    if n_rows is None:
        logging.critical('Selection needs the dataset size: set metadata.n_rows in the spec or pass --n-rows')
        return EXIT_USAGE
    options = model_selection.SelectionOptions(
        use_bic=not args.no_bic,
        strict_bic=not args.non_strict_bic,
        criterion=args.criterion,
        max_patterns=args.max_patterns,
        threads=args.threads,
        fit_options=fit_options_from_args(args)
    )
    try:
        selected, model, trace = model_selection.select(spec.schema, spec.constraints, spec.marginals, n_rows, options)
    except FitError as e:
        if getattr(e, 'trace', None) is not None and args.trace:
            save_data.save_table(e.trace.to_dataframe(), args.trace)
        raise
    save_data.save_model(model, args.out)
    table = trace.to_dataframe()
    if args.trace:
        save_data.save_table(table, args.trace)
    print(table.to_string(index=False))
    print(f'selected {len(selected)} of {len(spec.constraints)} patterns; stop reason: {trace.stop_reason}')
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_data.load_model(args.model)
    seed = resolve_seed(args.seed)
    dataset = sample(model, SampleSpec(n=args.n, seed=seed, rejection_cap=args.rejection_cap, threads=args.threads))
    save_data.write_dataset(dataset, args.out)
    return EXIT_OK


def cmd_query(args) -> int:
    model = load_data.load_model(args.model)
    try:
        pattern = parse_pattern(args.pattern, model.schema)
    except CatMaxEntError as e:
        logging.critical(f'Bad pattern expression: {e}')
        return EXIT_USAGE
    print(f'{model.query(pattern):.17g}')
    return EXIT_OK


def load_reference(path, schema):
    """
    Reference probabilities from a dataset (empirical frequencies) or a spec (its targets).

    Returns:
        source for approx_kl, patterns it can answer, reference marginals (or None)
    """
    if Path(path).suffix == '.json':
        spec = load_data.read_constraint_spec(path)
        if spec.schema != schema:
            raise IngestionError('Reference spec schema differs from the model schema', path=path)
        table = {c.pattern: c.target_prob for c in spec.constraints}
        if spec.marginals is not None:
            for a, row in enumerate(spec.marginals):
                table.update({Pattern({a: v}): float(p) for v, p in enumerate(row)})
        return table, list(table), spec.marginals
    dataset = load_data.read_dataset(path, schema)
    return dataset, None, clamp_marginals(marginal_frequencies(dataset))


def cmd_evaluate(args) -> int:
    model = load_data.load_model(args.model)
    reference, answerable, reference_marginals = load_reference(args.reference, model.schema)
    patterns = metrics.evaluation_patterns(model.constraints, model.schema, include_attributes=args.patterns == 'all')
    if answerable is not None:
        missing = [p for p in patterns if p not in set(answerable)]
        if missing:
            logging.critical(f'Reference spec has no target for {len(missing)} evaluation pattern(s), e.g. {missing[0].describe(model.schema)}')
            return EXIT_USAGE
    models = {'model': model}
    if args.baseline:
        if reference_marginals is None:
            logging.critical('Baseline needs reference marginals')
            return EXIT_USAGE
        models['baseline'] = metrics.baseline_independent_model(model.schema, reference_marginals)
    seed = resolve_seed(args.seed)
    table = metrics.kl_table(models, reference, patterns, n_samples=args.samples, seed=seed)
    print(table.to_string())
    if args.out:
        save_data.save_table(table.reset_index().rename(columns={'index': 'metric'}), args.out)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    seed = resolve_seed(args.seed)
    make_config = benchmark_datasets.BenchmarkConfig.full_scale if args.full_scale else benchmark_datasets.BenchmarkConfig
    overrides = {
        key: value for key, value in {
            'n_attributes': args.n_attributes,
            'n_patterns': args.n_patterns,
            'n_rows': args.n_rows,
            'n_decoys': args.n_decoys
        }.items() if value is not None
    }
    config = make_config(**overrides)
    benchmark = benchmark_datasets.generate_benchmark(config, seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_data.write_dataset(benchmark.dataset, out_dir / 'dataset.csv')
    spec = load_data.ConstraintSpec(
        schema=benchmark.schema,
        constraints=benchmark.candidates,
        marginals=benchmark.empirical_marginals,
        n_rows=len(benchmark.dataset),
        metadata={'seed': seed, 'planted': benchmark.is_planted, 'generator': 'catmaxent benchmark'}
    )
    save_data.write_constraint_spec(spec, out_dir / 'spec.json')
    print(f'wrote {out_dir / "dataset.csv"} and {out_dir / "spec.json"}')
    return EXIT_OK


def add_fit_flags(parser):
    parser.add_argument('--tolerance', dest='tolerance', type=positive_float, default=1e-6)
    parser.add_argument('--max-sweeps', dest='max_sweeps', type=positive_int, default=1000)
    parser.add_argument('--threads', dest='threads', type=positive_int, default=1)
    parser.add_argument('--validate-graph', dest='validate_graph', default=False, action='store_true',
                        help='check every block graph against the brute-force order relation (slow)')


def build_parser():
    parser = argparse.ArgumentParser(prog='catmaxent', description='Categorical maximum entropy models')
    parser.add_argument('--log-level', dest='log_level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    subparsers = parser.add_subparsers(dest='command', required=True)

    fit_parser = subparsers.add_parser('fit', help='fit the model to every constraint of a spec')
    fit_parser.add_argument('spec', type=str)
    fit_parser.add_argument('--out', dest='out', type=str, required=True)
    fit_parser.add_argument('--report', dest='report', type=str, default=None)
    add_fit_flags(fit_parser)
    fit_parser.set_defaults(func=cmd_fit)

    select_parser = subparsers.add_parser('select', help='greedily select informative constraints with BIC')
    select_parser.add_argument('spec', type=str)
    select_parser.add_argument('--out', dest='out', type=str, required=True)
    select_parser.add_argument('--trace', dest='trace', type=str, default=None)
    select_parser.add_argument('--n-rows', dest='n_rows', type=positive_int, default=None)
    select_parser.add_argument('--no-bic', dest='no_bic', default=False, action='store_true',
                               help='add candidates until none remain')
    select_parser.add_argument('--non-strict-bic', dest='non_strict_bic', default=False, action='store_true',
                               help='also accept candidates which leave BIC unchanged')
    select_parser.add_argument('--criterion', dest='criterion', default='heuristic', choices=['heuristic', 'likelihood'])
    select_parser.add_argument('--max-patterns', dest='max_patterns', type=positive_int, default=None)
    add_fit_flags(select_parser)
    select_parser.set_defaults(func=cmd_select)

    sample_parser = subparsers.add_parser('sample', help='sample synthetic tuples from a model')
    sample_parser.add_argument('model', type=str)
    sample_parser.add_argument('--n', dest='n', type=positive_int, required=True)
    sample_parser.add_argument('--seed', dest='seed', type=int, default=None)
    sample_parser.add_argument('--out', dest='out', type=str, required=True)
    sample_parser.add_argument('--threads', dest='threads', type=positive_int, default=1)
    sample_parser.add_argument('--rejection-cap', dest='rejection_cap', type=positive_int, default=10**6)
    sample_parser.set_defaults(func=cmd_sample)

    query_parser = subparsers.add_parser('query', help='probability of a pattern, e.g. sex=F,age=16-64')
    query_parser.add_argument('model', type=str)
    query_parser.add_argument('pattern', type=str)
    query_parser.set_defaults(func=cmd_query)

    evaluate_parser = subparsers.add_parser('evaluate', help='approximate KL against a reference spec or dataset')
    evaluate_parser.add_argument('model', type=str)
    evaluate_parser.add_argument('--reference', dest='reference', type=str, required=True)
    evaluate_parser.add_argument('--patterns', dest='patterns', default='constraints', choices=['constraints', 'all'],
                                 help='constraint patterns only, or also every single attribute value')
    evaluate_parser.add_argument('--baseline', dest='baseline', default=False, action='store_true')
    evaluate_parser.add_argument('--samples', dest='samples', type=positive_int, default=1000)
    evaluate_parser.add_argument('--seed', dest='seed', type=int, default=None)
    evaluate_parser.add_argument('--out', dest='out', type=str, default=None)
    evaluate_parser.set_defaults(func=cmd_evaluate)

    benchmark_parser = subparsers.add_parser('benchmark', help='generate a synthetic benchmark dataset and spec')
    benchmark_parser.add_argument('--out-dir', dest='out_dir', type=str, required=True)
    benchmark_parser.add_argument('--seed', dest='seed', type=int, default=None)
    benchmark_parser.add_argument('--full-scale', dest='full_scale', default=False, action='store_true')
    benchmark_parser.add_argument('--n-attributes', dest='n_attributes', type=positive_int, default=None)
    benchmark_parser.add_argument('--n-patterns', dest='n_patterns', type=positive_int, default=None)
    benchmark_parser.add_argument('--n-rows', dest='n_rows', type=positive_int, default=None)
    benchmark_parser.add_argument('--n-decoys', dest='n_decoys', type=int, default=None)
    benchmark_parser.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on usage errors, 0 on --help
        return int(e.code or 0)

    logging.basicConfig(level=getattr(logging, args.log_level), format='%(asctime)s %(levelname)s: %(message)s')

    try:
        return args.func(args)
    except FitError as e:
        logging.critical(f'Fit failed: {e}')
        return EXIT_NON_CONVERGENCE
    except InternalConsistencyError as e:
        logging.critical(f'Internal consistency error: {e}')
        return EXIT_INTERNAL
    except SamplingError as e:
        logging.critical(f'Sampling failed: {e}')
        return EXIT_SAMPLING
    except (CatMaxEntError, ValueError) as e:
        logging.critical(str(e))
        return EXIT_INGESTION


if __name__ == '__main__':
    sys.exit(main())
