"""Plain-text configuration handling shared by all CLI subcommands.

A config file holds dotted `section.field = value` lines; sections map onto
the four config dataclasses (reward, mas, estimator, nft). CLI `--set`
overrides win over file values, which win over the built-in defaults.
"""

from __future__ import annotations

import dataclasses
import io
import os

from .errors import MissingFile, ParseError
from .estimator import EstimatorConfig
from .nftlab import NftConfig
from .reward import MasConfig, RewardConfig

__all__ = [
    "ConfigBundle",
    "format_config",
    "load_config_file",
    "make_configs",
    "parse_assignments",
]

_SECTIONS = {
    "reward": RewardConfig,
    "mas": MasConfig,
    "estimator": EstimatorConfig,
    "nft": NftConfig,
}

# Field -> python type, derived from the dataclass defaults. Optional floats
# (reward.d_max, mas.d_min, mas.d_max) default to None and coerce as floats.
_FLOAT_IF_NONE = {
    ("reward", "d_max"),
    ("mas", "d_min"),
    ("mas", "d_max"),
}


@dataclasses.dataclass(frozen=True)
class ConfigBundle:
    reward: RewardConfig
    mas: MasConfig
    estimator: EstimatorConfig
    nft: NftConfig


def _field_type(section: str, field: dataclasses.Field):
    default = field.default
    if default is None:
        if (section, field.name) in _FLOAT_IF_NONE:
            return float
        return str
    return type(default)


def _known_fields() -> dict[str, type]:
    known = {}
    for section, cls in _SECTIONS.items():
        for field in dataclasses.fields(cls):
            known[f"{section}.{field.name}"] = _field_type(section, field)
    return known


def _coerce(key: str, raw: str, target: type):
    text = raw.strip()
    if text.lower() in ("none", "null"):
        return None
    try:
        if target is bool:
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
        return text
    except ValueError:
        raise ParseError(
            f"cannot parse {key} value {raw!r} as {target.__name__}"
        ) from None


def parse_assignments(pairs, source: str = "--set") -> dict[str, object]:
    """Parse `section.field=value` strings into typed values."""
    known = _known_fields()
    values: dict[str, object] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ParseError(f"{source}: expected key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in known:
            raise ParseError(
                f"{source}: unknown config key {key!r} (sections: "
                + ", ".join(sorted(_SECTIONS)) + ")"
            )
        values[key] = _coerce(key, raw, known[key])
    return values


def load_config_file(path: str) -> dict[str, object]:
    """Read `key = value` lines; '#' starts a comment, blank lines ignored."""
    if not os.path.isfile(path):
        raise MissingFile(f"config file not found: {path}")
    known = _known_fields()
    values: dict[str, object] = {}
    with io.open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}:{lineno}: expected key = value")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in known:
                raise ParseError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(f"{path}:{lineno}: {key}", raw, known[key])
    return values


def make_configs(
    file_values: dict[str, object] | None = None,
    overrides: dict[str, object] | None = None,
) -> ConfigBundle:
    merged: dict[str, object] = {}
    merged.update(file_values or {})
    merged.update(overrides or {})
    per_section: dict[str, dict[str, object]] = {name: {} for name in _SECTIONS}
    for key, value in merged.items():
        section, _, field = key.partition(".")
        per_section[section][field] = value
    try:
        return ConfigBundle(
            reward=RewardConfig(**per_section["reward"]),
            mas=MasConfig(**per_section["mas"]),
            estimator=EstimatorConfig(**per_section["estimator"]),
            nft=NftConfig(**per_section["nft"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid configuration: {exc}") from exc


def format_config(bundle: ConfigBundle) -> str:
    """Render the effective configuration as reloadable key = value lines."""
    lines = []
    for section in sorted(_SECTIONS):
        cfg = getattr(bundle, section)
        for field in dataclasses.fields(cfg):
            lines.append(f"{section}.{field.name} = {getattr(cfg, field.name)}")
    return "\n".join(lines) + "\n"
