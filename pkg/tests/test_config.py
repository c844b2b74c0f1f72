import pytest

from config import Settings, flatten_sections, load_config_file, normalize_keys
from utils.errors import ParseError


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv('HYPERPLANT_THREADS', '0')
    monkeypatch.setenv('HYPERPLANT_LOG_LEVEL', 'debug')
    monkeypatch.setenv('HYPERPLANT_TRIAL_TIMEOUT', '2.5')
    settings = Settings.from_env()
    assert settings.threads == 1
    assert settings.log_level == 'DEBUG'
    assert settings.trial_timeout == 2.5


def test_config_file(tmp_path):
    path = tmp_path / 'run.yaml'
    path.write_text('seed: 4\nlambda-mode: constant\nsolver:\n  max-iters: 20\n')
    assert load_config_file(path) == {'seed': 4, 'lambda_mode': 'constant', 'max_iters': 20}
    assert load_config_file(None) == {}
    empty = tmp_path / 'empty.yaml'
    empty.write_text('')
    assert load_config_file(empty) == {}


def test_bad_config_files(tmp_path):
    broken = tmp_path / 'broken.yaml'
    broken.write_text('seed: 1\nsolver: [1, 2\n')
    with pytest.raises(ParseError) as info:
        load_config_file(broken)
    assert info.value.line is not None
    listing = tmp_path / 'list.yaml'
    listing.write_text('- 1\n- 2\n')
    with pytest.raises(ParseError):
        load_config_file(listing)
    with pytest.raises(ParseError):
        load_config_file(tmp_path / 'absent.yaml')


def test_normalize_keys():
    assert normalize_keys({'a-b': {'c-d': 1}}) == {'a_b': {'c_d': 1}}


def test_sections_are_flattened(tmp_path):
    path = tmp_path / 'sections.yaml'
    path.write_text('restarts: 4\nsolver:\n  restarts: 9\n  method: exhaustive\ncertify:\n  restarts: 32\n'
                    '  constant-C: 2.0\n')
    assert load_config_file(path) == {'restarts': 4, 'method': 'exhaustive', 'spectral_restarts': 32,
                                      'constant_c': 2.0}
    assert flatten_sections({'solver': None, 'seed': 1}) == {'seed': 1}
    with pytest.raises(ParseError):
        flatten_sections({'solver': [1, 2]})
