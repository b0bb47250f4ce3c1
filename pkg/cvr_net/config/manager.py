"""Configuration manager for JSON run configuration files."""

import json
import logging
from typing import Any, Dict, Optional, Type, TypeVar

import pydantic
from pydantic import BaseModel

from ..errors import ConfigurationError, CVRIOError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def _describe_validation_error(error: pydantic.ValidationError) -> ConfigurationError:
    """Turn the first pydantic failure into a field-level configuration error."""
    first = error.errors()[0]
    field = ".".join(str(part) for part in first.get("loc", ())) or None
    if first.get("type") == "missing":
        message = "required field is missing"
    else:
        message = first.get("msg", str(error))
    return ConfigurationError(message, field=field, context={"errors": error.errors()})


class ConfigManager:
    """
    Loads JSON configuration files and validates them into pydantic models.

    A file may hold one flat configuration or several named sections
    (``{"generator": {...}, "train": {...}}``); ``load_section`` picks the
    section when present and otherwise uses the whole document.
    """

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self._data: Optional[Dict[str, Any]] = None

    def load_raw(self) -> Dict[str, Any]:
        """Read the JSON document (an empty document when no path was given)."""
        if self._data is not None:
            return self._data
        if self.config_path is None:
            self._data = {}
            return self._data
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in config file {self.config_path}: {str(e)}")
        except OSError as e:
            raise CVRIOError(self.config_path, f"cannot read config file: {e}", e)
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {self.config_path} must hold a JSON object")
        logger.info(f"Loaded configuration from {self.config_path}")
        self._data = data
        return data

    def load_section(self, section: str, model_cls: Type[ModelT],
                     overrides: Optional[Dict[str, Any]] = None) -> ModelT:
        """Validate ``section`` (or the whole document) merged with non-None overrides."""
        data = self.load_raw()
        values = data.get(section, data) if isinstance(data.get(section), dict) else data
        values = {k: v for k, v in values.items() if k in model_cls.model_fields}
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        try:
            return model_cls(**values)
        except pydantic.ValidationError as e:
            raise _describe_validation_error(e) from e
