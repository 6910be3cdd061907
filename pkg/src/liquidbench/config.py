"""``key = value`` config files with sections ``[train]``, ``[model]`` and ``[stress]``.

``[train]`` and ``[model]`` keys are :class:`TrainConfig` fields (split only
for readability); ``[stress]`` accepts ``drop_rates``, ``mode``, ``trials``
and ``base_seed``. Every error names the file line and the field.
"""

from __future__ import annotations

import configparser
import re
import typing
from dataclasses import fields
from pathlib import Path

from liquidbench.train import TrainConfig

SECTIONS = ("train", "model", "stress")
STRESS_KEYS = ("drop_rates", "mode", "trials", "base_seed")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigFileError(ValueError):
    def __init__(self, message: str, path=None, line: int | None = None, field: str | None = None):
        self.path, self.line, self.field = path, line, field
        where = f"{path}" if path else "<config>"
        if line is not None:
            where += f":{line}"
        if field:
            where += f" [{field}]"
        super().__init__(f"{where}: {message}")


def _field_types() -> dict[str, str]:
    hints = typing.get_type_hints(TrainConfig)
    out = {}
    for f in fields(TrainConfig):
        t = hints[f.name]
        args = [a for a in typing.get_args(t) if a is not type(None)]
        out[f.name] = (args[0] if args else t).__name__
    return out


def convert(value: str, kind: str):
    v = value.strip()
    if kind == "bool":
        if v.lower() in _TRUE:
            return True
        if v.lower() in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {v!r}")
    if kind == "int":
        return int(v)
    if kind == "float":
        return float(v)
    return v


def parse_rates(text: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("empty rate list")
    return tuple(float(p) for p in parts)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """``(section, key) -> line number`` for diagnostics; key ``""`` is the header."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, ""), no)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = no
    return out


def parse_config(text: str, path=None) -> tuple[dict, dict]:
    """Return ``(train_fields, stress_fields)`` with values converted."""
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigFileError("key outside any [section]", path, exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigFileError("duplicate key", path, exc.lineno, exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigFileError("duplicate section", path, exc.lineno, exc.section) from None
    except configparser.ParsingError as exc:
        line, content = exc.errors[0]
        raise ConfigFileError(f"cannot parse {content.strip()!r}", path, line) from None
    lines = _key_lines(text)
    types = _field_types()
    train, stress = {}, {}
    for section in parser.sections():
        name = section.lower()
        if name not in SECTIONS:
            raise ConfigFileError(f"unknown section; expected one of {SECTIONS}", path,
                                  lines.get((name, "")), section)
        for key, raw in parser.items(section):
            line = lines.get((name, key))
            try:
                if name == "stress":
                    if key not in STRESS_KEYS:
                        raise ConfigFileError(f"unknown key; expected one of {STRESS_KEYS}", path, line, key)
                    if key == "drop_rates":
                        stress[key] = parse_rates(raw)
                    elif key == "mode":
                        stress[key] = raw.strip()
                    else:
                        stress[key] = int(raw)
                else:
                    if key not in types:
                        raise ConfigFileError("unknown key", path, line, key)
                    train[key] = convert(raw, types[key])
            except ValueError as exc:
                if isinstance(exc, ConfigFileError):
                    raise
                raise ConfigFileError(str(exc), path, line, key) from None
    return train, stress


def read_config(path) -> tuple[dict, dict]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigFileError(f"cannot read: {exc.strerror}", path) from None
    except UnicodeDecodeError:
        raise ConfigFileError("not UTF-8 text", path) from None
    return parse_config(text, path)
