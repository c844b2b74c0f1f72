import os
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from utils.errors import ParseError

logger = logging.getLogger(__name__)

# .env values never override variables already set in the environment
load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Process-wide defaults read from the environment"""
    threads: int = 1
    log_level: str = 'INFO'
    trial_timeout: float = 30.0
    session_secret: str = 'dev-secret-key-change-in-production'
    port: int = 5000

    @classmethod
    def from_env(cls) -> 'Settings':
        return cls(
            threads=max(1, int(os.environ.get('HYPERPLANT_THREADS', 1))),
            log_level=os.environ.get('HYPERPLANT_LOG_LEVEL', 'INFO').upper(),
            trial_timeout=float(os.environ.get('HYPERPLANT_TRIAL_TIMEOUT', 30.0)),
            session_secret=os.environ.get('SESSION_SECRET', 'dev-secret-key-change-in-production'),
            port=int(os.environ.get('HYPERPLANT_PORT', 5000)),
        )


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """Read a YAML mapping whose keys mirror the CLI flags (dashes or underscores).

    The ``solver:`` and ``certify:`` sections are flattened onto the flag
    names; any other nested mapping is left as is and rejected by the CLI.
    """
    if path is None:
        return {}
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except OSError as e:
        raise ParseError(f"cannot read config: {e}", path=str(path)) from e
    except yaml.YAMLError as e:
        line = e.problem_mark.line + 1 if getattr(e, 'problem_mark', None) else None
        raise ParseError(f"invalid YAML: {getattr(e, 'problem', e)}", line=line, path=str(path)) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ParseError("config file must hold a mapping of option names to values", path=str(path))
    logger.debug(f"Loaded config file {path}")
    return flatten_sections(normalize_keys(data), path)


def normalize_keys(data: Dict[str, Any]) -> Dict[str, Any]:
    return {str(key).replace('-', '_'): normalize_keys(value) if isinstance(value, dict) else value
            for key, value in data.items()}


# nested sections accepted in config files, with keys whose flag name differs
SECTIONS = {
    'solver': {},
    'certify': {'restarts': 'spectral_restarts', 'constant_C': 'constant_c'},
}


def flatten_sections(data: Dict[str, Any], path: Optional[Path] = None) -> Dict[str, Any]:
    """Lift ``solver:`` and ``certify:`` sections onto flag names; top-level keys win"""
    flat = {key: value for key, value in data.items() if key not in SECTIONS}
    for section, renames in SECTIONS.items():
        nested = data.get(section)
        if nested is None:
            continue
        if not isinstance(nested, dict):
            raise ParseError(f"section '{section}' must be a mapping", path=str(path) if path else None)
        for key, value in nested.items():
            flat.setdefault(renames.get(key, key), value)
    return flat
