import os
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

load_dotenv()

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def config_dir() -> Path:
    """Directory holding model_config.yaml and runtime_config.yaml"""
    return Path(os.getenv("METER_CONFIG_DIR", str(DEFAULT_CONFIG_DIR)))


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigurationError(f"configuration file not found: {path}")
    except yaml.YAMLError as e:
        logger.error(f"Error parsing {path}: {str(e)}")
        raise ConfigurationError(f"malformed YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must hold a mapping at top level")
    return data


@lru_cache(maxsize=4)
def _load_model_config(directory: str) -> Dict[str, Any]:
    data = _read_yaml(Path(directory) / "model_config.yaml")
    if "presets" not in data or "defaults" not in data:
        raise ConfigurationError("model_config.yaml needs 'defaults' and 'presets' sections")
    return data


@lru_cache(maxsize=4)
def _load_runtime_config(directory: str) -> Dict[str, Any]:
    return _read_yaml(Path(directory) / "runtime_config.yaml")


def load_model_config() -> Dict[str, Any]:
    """Variant presets and shared structural defaults"""
    return _load_model_config(str(config_dir()))


def load_runtime_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Runtime settings, with METER_LOG_LEVEL applied on top of the file"""
    if path is not None:
        settings = _read_yaml(Path(path))
    else:
        settings = dict(_load_runtime_config(str(config_dir())))
    level = os.getenv("METER_LOG_LEVEL")
    if level:
        settings["logging"] = {**settings.get("logging", {}), "log_level": level.upper()}
    return settings


def section(settings: Dict[str, Any], name: str) -> Dict[str, Any]:
    value = settings.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section '{name}' must be a mapping")
    return value
