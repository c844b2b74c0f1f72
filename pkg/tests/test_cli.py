import csv

from cli import build_parser, main
from config import Settings, load_config_file


def _generate(tmp_path, *extra):
    out = tmp_path / 'inst.tensor'
    code = main(['--seed', '3', 'generate', '--n', '6', '--m', '3', '--r', '2', '--k', '3', '--p', '1', '--q', '0',
                 '--out', str(out), *extra])
    assert code == 0
    return out


def test_generate_writes_tensor_and_partition(tmp_path, capsys):
    out = _generate(tmp_path)
    assert out.exists()
    assert (tmp_path / 'inst.tensor.partition').exists()
    assert out.read_text().splitlines()[0] == '3 6'
    assert 'clusters:' in capsys.readouterr().out


def test_norms_of_file(tmp_path, capsys):
    out = _generate(tmp_path)
    capsys.readouterr()
    assert main(['norms', str(out), '--restarts', '8']) == 0
    printed = capsys.readouterr().out
    assert 'order 3, dim 6, symmetric true' in printed
    assert 'spectral (power)' in printed


def test_certify_file_and_csv(tmp_path, capsys):
    out = _generate(tmp_path)
    report = tmp_path / 'cert.csv'
    assert main(['certify', str(out), '--p', '1', '--q', '0', '--spectral-restarts', '8', '--csv', str(report)]) == 0
    assert 'verdict            PASS' in capsys.readouterr().out
    with open(report, newline='') as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]['passes'] == 'true'
    assert rows[0]['failed_checks'] == ''


def test_certify_audit_and_generate(tmp_path, capsys):
    out = _generate(tmp_path)
    assert main(['certify', str(out), '--audit', '--spectral-restarts', '8']) == 0
    assert 'PASS' in capsys.readouterr().out
    assert main(['--seed', '2', 'certify', '--generate', '--n', '6', '--p', '0.9', '--q', '0.1',
                 '--spectral-restarts', '8']) == 0
    assert 'margin' in capsys.readouterr().out


def test_solve_generated_instance(tmp_path, capsys):
    recovered = tmp_path / 'found.partition'
    code = main(['--seed', '1', 'solve', '--generate', '--n', '6', '--p', '1', '--q', '0', '--method', 'exhaustive',
                 '--partition-out', str(recovered)])
    assert code == 0
    assert 'exact              true' in capsys.readouterr().out
    assert recovered.exists()


def test_threshold_reads_config_file(tmp_path, capsys):
    config = tmp_path / 'cfg.yaml'
    config.write_text('n: 4\nm: 2\nr: 2\nk: 2\np: 1.0\nq: 0.0\n')
    assert main(['--config', str(config), 'threshold']) == 0
    printed = capsys.readouterr().out
    assert 'M(n=4, m=2, r=2, k=2' in printed
    assert 'predicate                             false' in printed


def test_experiment_run_and_report(tmp_path, capsys):
    output = tmp_path / 'grid.csv'
    code = main(['experiment', 'run', '--n', '6', '--m', '3', '--r', '2', '--k', '3', '--p', '1.0', '--q', '0.0',
                 '--trials', '2', '--spectral-restarts', '8', '--output', str(output)])
    assert code == 0
    assert output.exists()
    capsys.readouterr()
    assert main(['experiment', 'report', str(output)]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith('C = ')


def test_errors_and_missing_command(tmp_path, capsys):
    assert main(['certify']) == 2
    assert 'error:' in capsys.readouterr().err
    assert main(['--config', str(tmp_path / 'absent.yaml'), 'threshold']) == 2
    assert main(['threshold', '--n', '5', '--r', '2', '--k', '3']) == 2
    assert main([]) == 1


def test_config_sections_reach_the_flags(tmp_path):
    config = tmp_path / 'nested.yaml'
    config.write_text('solver:\n  method: exhaustive\n  max-iters: 20\ncertify:\n  restarts: 8\n')
    parser = build_parser(Settings(), load_config_file(config))
    args = parser.parse_args(['solve', 'inst.tensor'])
    assert args.method == 'exhaustive'
    assert args.max_iters == 20
    args = parser.parse_args(['certify', 'inst.tensor'])
    assert args.spectral_restarts == 8


def test_unknown_config_keys_are_rejected(tmp_path, capsys):
    config = tmp_path / 'typo.yaml'
    config.write_text('n: 4\nmax-iter: 20\nplotting:\n  dpi: 300\n')
    assert main(['--config', str(config), 'threshold']) == 2
    assert 'max_iter, plotting' in capsys.readouterr().err
