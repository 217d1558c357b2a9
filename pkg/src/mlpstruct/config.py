"""INI-style configuration files mapped onto the config dataclasses.

A file has up to four sections, ``[experiment]``, ``[data]``, ``[train]`` and
``[prune]``; each key is a field of the matching dataclass. Values are
parsed according to the type of the field's default: booleans accept
``true/false/yes/no/1/0``, tuples are comma separated and an empty value
means ``None`` for optional fields.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from pathlib import Path


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _scalar_fields(cls):
    return [f for f in dataclasses.fields(cls) if not dataclasses.is_dataclass(_default(f))]


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def parse_value(text: str, default, key: str = "value"):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(p.strip() for p in text.split(",") if p.strip())
        if default is None:
            return None if text == "" else text
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def update_dataclass(obj, values: dict, section: str = ""):
    """Return ``obj`` with string ``values`` parsed into its scalar fields."""
    known = {f.name: f for f in _scalar_fields(type(obj))}
    changes = {}
    for key, text in values.items():
        name = key.strip().replace("-", "_")
        if name not in known:
            where = f"[{section}] " if section else ""
            raise ConfigError(f"{where}unknown key {key!r}; known keys: {', '.join(sorted(known))}")
        current = getattr(obj, name)
        default = _default(known[name])
        proto = current if current is not None else default
        changes[name] = parse_value(text, proto, f"{section}.{name}" if section else name)
    try:
        return dataclasses.replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def dataclass_section(obj) -> dict:
    return {f.name: format_value(getattr(obj, f.name)) for f in _scalar_fields(type(obj))}


def read_sections(path) -> dict:
    """Parse an INI file into ``{section: {key: text}}``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {name: dict(parser[name]) for name in parser.sections()}


def parse_overrides(items) -> dict:
    """``["train.max_iterations=10", ...]`` -> ``{"train": {"max_iterations": "10"}}``."""
    out: dict = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or not section or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        out.setdefault(section.strip(), {})[name.strip()] = value
    return out


def merge_sections(*layers) -> dict:
    out: dict = {}
    for layer in layers:
        for section, values in layer.items():
            out.setdefault(section, {}).update(values)
    return out


def dumps_sections(sections: dict, header: str = "") -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for name, values in sections.items():
        parser[name] = values
    buf = io.StringIO()
    if header:
        buf.write("".join(f"# {line}\n" for line in header.splitlines()))
    parser.write(buf)
    return buf.getvalue()


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``fixture`` or ``planted``)."""
    path = Path(__file__).with_name("configs") / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def resolve_config_path(spec: str) -> Path:
    path = Path(spec)
    if path.is_file():
        return path
    if path.suffix == "" and path.parent == Path("."):
        return bundled_config(spec)
    raise ConfigError(f"config file {spec!r} not found")
