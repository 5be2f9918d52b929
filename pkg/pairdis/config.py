"""Flat ``key=value`` config files and environment overrides for the CLI."""

import argparse
import logging
import os
from pathlib import Path
from typing import Dict, Optional, Union

from pairdis.errors import ContractError, FormatError

logger = logging.getLogger(__name__)

SEED_ENV = "PAIRDIS_SEED"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ContractError(f"not a boolean: '{value}'")


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Read ``key=value`` lines.

    Blank lines and ``#`` comments are skipped; dashes in keys become
    underscores so keys may be written like the flags.

    Args:
        path: Config file.

    Returns:
        Key to raw string value, later lines winning.
    """
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"config file not found: {path}")
    items: Dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise FormatError(f"{path}:{line_no}: expected key=value, got '{raw.strip()}'")
        items[key] = value.strip()
    return items


def apply_config_defaults(parser: argparse.ArgumentParser, items: Dict[str, str]) -> None:
    """
    Install config values as parser defaults, so explicit flags still win.

    Values are converted with the matching argument's ``type``; switches
    accept the usual boolean spellings. A required flag set in the config
    no longer has to appear on the command line.
    """
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in items.items():
        action = actions.get(key)
        if action is None:
            raise FormatError(f"unknown config key '{key}' for this command")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = parse_bool(raw)
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as e:
                raise FormatError(f"config key '{key}': {e}") from e
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise FormatError(f"config key '{key}': '{raw}' is not one of {list(action.choices)}")
        action.required = False
    parser.set_defaults(**defaults)
    logger.debug("config defaults %s", sorted(defaults))


def resolve_seed(seed: Optional[int]) -> int:
    """The ``PAIRDIS_SEED`` environment value when set, else ``seed`` (or 0)."""
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            value = int(env)
        except ValueError as e:
            raise ContractError(f"{SEED_ENV} must be an integer, got '{env}'") from e
        if seed is not None and seed != value:
            logger.info("%s=%d overrides --seed %d", SEED_ENV, value, seed)
        return value
    return 0 if seed is None else seed
