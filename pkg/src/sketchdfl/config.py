"""Config-file parsing and emission.

The file format is sectioned key=value text (INI) mirroring SimConfig:
[task], [topology], [aggregator], [attack], [run], [seeds]. An empty file
is a complete, valid config (all defaults). Unknown sections or keys are
rejected with an error naming the offending path, and emit_config always
writes every key, seeds included, so emitted configs replay exactly.
"""
from __future__ import annotations

import configparser
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .aggregation import AggregatorSpec
from .attacks import AttackSpec
from .engine import Seeds, SimConfig
from .errors import ConfigurationError
from .learning import TaskSpec
from .topology import TopologySpec

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _to_bool(raw: str, path: str) -> bool:
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ConfigurationError(f"{path}: expected a boolean, got {raw!r}") from None


def _to_int(raw: str, path: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigurationError(f"{path}: expected an integer, got {raw!r}") from None


def _to_float(raw: str, path: str) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ConfigurationError(f"{path}: expected a number, got {raw!r}") from None


def _to_opt_int(raw: str, path: str) -> int | None:
    if raw.strip().lower() in ("", "none"):
        return None
    return _to_int(raw, path)


def _to_str(raw: str, path: str) -> str:
    return raw.strip()


# section -> key -> (target dataclass field, converter)
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "task": {
        "kind": ("kind", _to_str),
        "features": ("features", _to_int),
        "classes": ("classes", _to_int),
        "hidden": ("hidden", _to_int),
        "samples_per_client": ("samples_per_client", _to_int),
        "test_samples": ("test_samples", _to_int),
        "concentration": ("concentration", _to_float),
        "dim": ("dim", _to_int),
        "separation": ("separation", _to_float),
        "noise": ("noise", _to_float),
    },
    "topology": {
        "kind": ("kind", _to_str),
        "p": ("p", _to_float),
        "degree": ("degree", _to_int),
    },
    "aggregator": {
        "kind": ("kind", _to_str),
        "gamma": ("gamma", _to_float),
        "kappa": ("kappa", _to_float),
        "alpha": ("alpha", _to_float),
        "krum_f": ("krum_f", _to_opt_int),
        "sketch_size": ("sketch_size", _to_int),
        "sketch_seed": ("sketch_seed", _to_opt_int),
        "rel_tol": ("rel_tol", _to_float),
    },
    "attack": {
        "kind": ("kind", _to_str),
        "sigma": ("sigma", _to_float),
        "lam": ("lam", _to_float),
        "consistent_sketch": ("consistent_sketch", _to_bool),
    },
    "run": {
        "nodes": ("n_nodes", _to_int),
        "byz_fraction": ("byz_fraction", _to_float),
        "rounds": ("rounds", _to_int),
        "local_epochs": ("local_epochs", _to_int),
        "lr": ("lr", _to_float),
        "batch_size": ("batch_size", _to_int),
        "threads": ("threads", _to_int),
        "verification": ("verification", _to_bool),
        "per_client_eval": ("per_client_eval", _to_bool),
    },
    "seeds": {
        "data": ("data", _to_int),
        "topology": ("topology", _to_int),
        "byzantine": ("byzantine", _to_int),
        "training": ("training", _to_int),
        "attack": ("attack", _to_int),
        "sketch": ("sketch", _to_int),
    },
}

_SECTION_TYPES = {
    "task": TaskSpec,
    "topology": TopologySpec,
    "aggregator": AggregatorSpec,
    "attack": AttackSpec,
    "seeds": Seeds,
}


def parse_config_text(text: str, origin: str = "<config>") -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigurationError(f"{origin}: {exc}") from None
    kwargs_by_section: dict[str, dict] = {name: {} for name in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(
                f"{origin}: unknown section [{section}] "
                f"(expected one of {sorted(_SCHEMA)})"
            )
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(
                    f"{origin}: unknown key {section}.{key} "
                    f"(expected one of {sorted(_SCHEMA[section])})"
                )
            field_name, convert = _SCHEMA[section][key]
            value = convert(raw, f"{section}.{key}")
            kwargs_by_section[section][field_name] = value
    def build(section: str, cls):
        try:
            return cls(**kwargs_by_section[section])
        except ConfigurationError as exc:
            raise ConfigurationError(f"{origin}: [{section}] {exc}") from None

    parts = {section: build(section, cls) for section, cls in _SECTION_TYPES.items()}
    try:
        return SimConfig(
            task=parts["task"],
            topology=parts["topology"],
            aggregator=parts["aggregator"],
            attack=parts["attack"],
            seeds=parts["seeds"],
            **kwargs_by_section["run"],
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{origin}: [run] {exc}") from None


def parse_config(path: str | Path) -> SimConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), origin=str(path))


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(config: SimConfig) -> str:
    """Full INI text with every key explicit; parse(emit(c)) == c."""
    sections: dict[str, list[tuple[str, object]]] = {}
    for section, keys in _SCHEMA.items():
        holder = {
            "task": config.task,
            "topology": config.topology,
            "aggregator": config.aggregator,
            "attack": config.attack,
            "run": config,
            "seeds": config.seeds,
        }[section]
        sections[section] = [
            (key, getattr(holder, field_name)) for key, (field_name, _) in keys.items()
        ]
    lines = []
    for section, pairs in sections.items():
        lines.append(f"[{section}]")
        for key, value in pairs:
            lines.append(f"{key} = {_render(value)}")
        lines.append("")
    return "\n".join(lines)


def _unused_fields_guard() -> None:
    # keep the schema honest: every dataclass field must be reachable
    for section, cls in _SECTION_TYPES.items():
        covered = {field_name for field_name, _ in _SCHEMA[section].values()}
        actual = {f.name for f in dataclass_fields(cls)}
        assert covered == actual, (section, covered ^ actual)
    run_covered = {field_name for field_name, _ in _SCHEMA["run"].values()}
    run_actual = {
        f.name
        for f in dataclass_fields(SimConfig)
        if f.name not in ("task", "topology", "aggregator", "attack", "seeds")
    }
    assert run_covered == run_actual, run_covered ^ run_actual


_unused_fields_guard()
