"""
Config Service
Loads TOML run configurations and fingerprints them.
"""

import hashlib
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Union

from pydantic import ValidationError

from core.exceptions import ConfigParseError, ConfigurationError, UsageError
from models.config_models import RunConfig

logger = logging.getLogger(__name__)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate TOML text."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigParseError(f"{source}: {e}") from e
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field_path = ".".join(str(part) for part in first["loc"])
        raise ConfigurationError(first["msg"], field_path, {"errors": e.error_count()}) from e


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a run configuration; None yields the default preset.

    Args:
        path: TOML file

    Returns:
        Validated RunConfig
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"Cannot read configuration {path}: {e.strerror}") from e
    config = parse_config(text, str(path))
    logger.info(f"Loaded configuration {path} (hash {config_hash(config)[:12]})")
    return config


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON form."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
