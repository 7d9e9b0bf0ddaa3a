import json

import pandas as pd
import pytest

from catmaxent import cli
from catmaxent.shared import load_data


@pytest.fixture
def benchmark_dir(tmp_path):
    out_dir = tmp_path / 'benchmark'
    code = cli.main([
        'benchmark', '--out-dir', str(out_dir), '--seed', '3',
        '--n-attributes', '6', '--n-patterns', '2', '--n-rows', '800', '--n-decoys', '1'
    ])
    assert code == cli.EXIT_OK
    return out_dir


@pytest.fixture
def selected_model(benchmark_dir, tmp_path):
    model_path = tmp_path / 'model.json'
    code = cli.main(['select', str(benchmark_dir / 'spec.json'), '--out', str(model_path),
                     '--trace', str(tmp_path / 'trace.csv')])
    assert code == cli.EXIT_OK
    return model_path


def test_benchmark_writes_files(benchmark_dir):
    spec = load_data.read_constraint_spec(benchmark_dir / 'spec.json')
    assert spec.n_rows == 800
    assert spec.metadata['seed'] == 3
    dataset = load_data.read_dataset(benchmark_dir / 'dataset.csv', spec.schema)
    assert len(dataset) == 800


def test_select_writes_model_and_trace(selected_model, tmp_path):
    model = load_data.load_model(selected_model)
    trace = pd.read_csv(tmp_path / 'trace.csv')
    assert trace['constraint_index'].iloc[0] == -1
    assert len(model.constraints) == int(trace['accepted'].sum()) - 1


def test_fit_with_report(benchmark_dir, tmp_path, capsys):
    code = cli.main(['fit', str(benchmark_dir / 'spec.json'), '--out', str(tmp_path / 'full.json'),
                     '--report', str(tmp_path / 'report.csv'), '--threads', '2'])
    assert code == cli.EXIT_OK
    assert 'converged=True' in capsys.readouterr().out
    assert bool(pd.read_csv(tmp_path / 'report.csv')['converged'].iloc[0])


def test_sample_and_query(selected_model, tmp_path, capsys):
    out = tmp_path / 'synthetic.csv'
    assert cli.main(['sample', str(selected_model), '--n', '300', '--seed', '11', '--out', str(out)]) == cli.EXIT_OK
    assert len(pd.read_csv(out)) == 300
    first = out.read_text()
    assert cli.main(['sample', str(selected_model), '--n', '300', '--seed', '11', '--out', str(out)]) == cli.EXIT_OK
    assert out.read_text() == first

    capsys.readouterr()
    assert cli.main(['query', str(selected_model), 'A0=v0']) == cli.EXIT_OK
    prob = float(capsys.readouterr().out.strip())
    assert 0. < prob < 1.


def test_sample_prints_generated_seed(selected_model, tmp_path, capsys):
    assert cli.main(['sample', str(selected_model), '--n', '5', '--out', str(tmp_path / 's.csv')]) == cli.EXIT_OK
    assert capsys.readouterr().out.startswith('seed: ')


def test_evaluate(selected_model, benchmark_dir, tmp_path):
    out = tmp_path / 'kl.csv'
    code = cli.main(['evaluate', str(selected_model), '--reference', str(benchmark_dir / 'dataset.csv'),
                     '--patterns', 'all', '--baseline', '--samples', '200', '--seed', '0', '--out', str(out)])
    assert code == cli.EXIT_OK
    table = pd.read_csv(out)
    assert list(table.columns) == ['metric', 'model', 'baseline']
    assert (table[['model', 'baseline']].values >= 0).all()


def test_usage_errors(selected_model, tmp_path):
    assert cli.main(['sample', str(selected_model), '--n', '0', '--seed', '1', '--out', str(tmp_path / 's.csv')]) == cli.EXIT_USAGE
    assert cli.main(['query', str(selected_model), 'A0']) == cli.EXIT_USAGE
    assert cli.main(['query', str(selected_model), 'nope=v0']) == cli.EXIT_USAGE
    assert cli.main(['frobnicate']) == cli.EXIT_USAGE


def test_missing_input(tmp_path):
    assert cli.main(['fit', str(tmp_path / 'missing.json'), '--out', str(tmp_path / 'm.json')]) == cli.EXIT_INGESTION


def test_non_convergence(tmp_path):
    spec = {
        'schema': {'attributes': [{'name': 'a', 'values': ['0', '1']}, {'name': 'b', 'values': ['0', '1']}]},
        'patterns': [
            {'assignments': {'a': '0'}, 'target': 0.3},
            {'assignments': {'a': '0', 'b': '0'}, 'target': 0.5}
        ]
    }
    path = tmp_path / 'inconsistent.json'
    path.write_text(json.dumps(spec))
    code = cli.main(['fit', str(path), '--out', str(tmp_path / 'm.json'), '--max-sweeps', '50'])
    assert code == cli.EXIT_NON_CONVERGENCE


def test_select_needs_row_count(tmp_path):
    spec = {
        'schema': {'attributes': [{'name': 'a', 'values': ['0', '1']}, {'name': 'b', 'values': ['0', '1']}]},
        'patterns': [{'assignments': {'a': '0', 'b': '1'}, 'target': 0.4}]
    }
    path = tmp_path / 'spec.json'
    path.write_text(json.dumps(spec))
    assert cli.main(['select', str(path), '--out', str(tmp_path / 'm.json')]) == cli.EXIT_USAGE
    assert cli.main(['select', str(path), '--out', str(tmp_path / 'm.json'), '--n-rows', '1000']) == cli.EXIT_OK
