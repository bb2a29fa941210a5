"""Experiment configuration: a line-oriented ``[section] key = value`` file.

Parsing goes through :mod:`configparser`; the schema below types every key and
rejects unknown ones.  Lists are comma separated.  Every error names the
section and key it concerns.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

SECTIONS = ("model", "noise", "grid", "initial", "solver", "particles", "output")


class ConfigError(ValueError):
    """Base class of configuration diagnostics."""


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UnknownKeyError(ConfigError):
    pass


class ConfigTypeError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    pass


class UnresolvedReferenceError(ConfigError):
    pass


# --- value types -----------------------------------------------------------------

def _real(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _integer(text: str) -> int:
    return int(text.strip())


def _text(text: str) -> str:
    return text.strip()


def _boolean(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(text)


def _reals(text: str) -> tuple[float, ...]:
    return tuple(_real(x) for x in text.split(",") if x.strip())


TYPES: dict[str, tuple[Callable[[str], Any], str]] = {
    "real": (_real, "a real number"),
    "integer": (_integer, "an integer"),
    "text": (_text, "text"),
    "bool": (_boolean, "true or false"),
    "reals": (_reals, "a comma-separated list of reals"),
}

# key -> (type, default); None means "absent unless given"
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "model": {
        "kind": ("text", "burgers"),
        "epsilon": ("real", 0.0),
        "R": ("real", 2.0),
        "chi": ("real", 1.0),
        "field": ("text", None),
        "beta": ("real", None),
        "p": ("real", None),
        "q": ("real", math.inf),
        "r": ("real", math.inf),
        "has_div_bound": ("bool", None),
        "eta": ("real", 0.01),
    },
    "noise": {
        "alpha": ("real", 2.0),
        "measure": ("text", "isotropic"),
        "atoms": ("text", None),
        "diffusivity": ("real", 0.5),
    },
    "grid": {
        "d": ("integer", 1),
        "L": ("real", 8.0),
        "N": ("integer", 512),
    },
    "initial": {
        "kind": ("text", "gaussian"),
        "sigma": ("real", 1.0),
        "center": ("reals", None),
        "path": ("text", None),
        "beta0": ("real", 0.0),
        "p0": ("real", math.inf),
        "q0": ("real", math.inf),
    },
    "solver": {
        "t_start": ("real", 0.0),
        "horizon": ("real", 0.5),
        "M": ("integer", 64),
        "grading": ("real", 1.0),
        "picard_tol": ("real", 1e-8),
        "picard_max": ("integer", 60),
        "blowup_threshold": ("real", None),
        "vartheta": ("real", 0.9),
        "max_bisections": ("integer", 0),
        "snapshots": ("integer", 4),
        "kernel": ("text", "model"),
    },
    "particles": {
        "n": ("integer", 10000),
        "dt": ("real", 0.01),
        "seed": ("integer", 0),
        "bandwidth": ("text", "auto"),
        "snapshots": ("integer", 1),
    },
    "output": {
        "dir": ("text", "mkv_out"),
    },
}

KERNEL_KINDS = ("burgers", "biot_savart", "keller_segel", "custom", "zero")


@dataclass
class ExperimentConfig:
    """Typed configuration; ``values[section][key]`` holds every schema key."""

    values: dict[str, dict[str, Any]]
    warnings: list[str] = field(default_factory=list, compare=False)
    base_dir: Path = field(default=Path("."), compare=False)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def get(self, section: str, key: str) -> Any:
        return self.values[section][key]

    def resolve_path(self, raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p


def _format(kind: str, value: Any) -> str:
    if kind == "real":
        return "inf" if math.isinf(value) else repr(float(value))
    if kind == "reals":
        return ", ".join(_format("real", v) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Text form that parses back to an equal configuration (absent keys are omitted)."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for key, (kind, _) in SCHEMA[sec].items():
            v = cfg.values[sec][key]
            if v is not None:
                lines.append(f"{key} = {_format(kind, v)}")
        lines.append("")
    return "\n".join(lines)


def parse_config(source: str | Path, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse a configuration file path or its text.

    Raises a :class:`ConfigError` subclass naming the offending line, section
    or key.  Non-fatal remarks land in ``warnings``.
    """
    if isinstance(source, Path) or ("\n" not in source and "=" not in source and Path(source).is_file()):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read {path}: {exc}") from exc
        base_dir = base_dir or path.parent
    else:
        text = str(source)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("expected a [section] header before the first key", exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigParseError(f"duplicate section [{exc.section}]", exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("malformed line (expected `key = value`)", line) from exc

    values: dict[str, dict[str, Any]] = {}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise UnknownKeyError(f"unknown section [{sec}]; expected one of {', '.join(SECTIONS)}")
    for sec in SECTIONS:
        schema = SCHEMA[sec]
        out = {k: d for k, (_, d) in schema.items()}
        if parser.has_section(sec):
            for key, raw in parser.items(sec):
                if key not in schema:
                    raise UnknownKeyError(f"[{sec}] unknown key {key!r}")
                kind, _ = schema[key]
                conv, what = TYPES[kind]
                try:
                    out[key] = conv(raw)
                except (TypeError, ValueError):
                    raise ConfigTypeError(f"[{sec}] {key} = {raw!r}: expected {what}") from None
        values[sec] = out
    cfg = ExperimentConfig(values, base_dir=base_dir or Path("."))
    validate(cfg)
    return cfg


def _range(cond: bool, sec: str, key: str, reason: str) -> None:
    if not cond:
        raise ConfigValueError(f"[{sec}] {key}: {reason}")


def validate(cfg: ExperimentConfig) -> None:
    m, n, g, i, s, p = (cfg[x] for x in ("model", "noise", "grid", "initial", "solver", "particles"))
    _range(1.0 < n["alpha"] <= 2.0, "noise", "alpha", f"alpha must lie in (1, 2], got {n['alpha']}")
    _range(n["diffusivity"] > 0, "noise", "diffusivity", "must be positive")
    _range(n["measure"] in ("isotropic", "cylindrical", "atoms"), "noise", "measure",
           "must be isotropic, cylindrical or atoms")
    if n["measure"] == "atoms" and not n["atoms"]:
        raise UnresolvedReferenceError("[noise] measure = atoms needs an atoms list")
    _range(g["d"] in (1, 2, 3), "grid", "d", "dimension must be 1, 2 or 3")
    _range(g["L"] > 0, "grid", "L", "must be positive")
    _range(g["N"] >= 16 and g["N"] & (g["N"] - 1) == 0, "grid", "N", "must be a power of two >= 16")
    _range(m["kind"] in KERNEL_KINDS, "model", "kind", f"must be one of {', '.join(KERNEL_KINDS)}")
    _range(m["epsilon"] >= 0, "model", "epsilon", "must be >= 0")
    _range(m["R"] > 0, "model", "R", "must be positive")
    _range(m["chi"] > 0, "model", "chi", "must be positive")
    _range(m["eta"] > 0, "model", "eta", "must be positive")
    if m["beta"] is not None:
        _range(-1.0 <= m["beta"] <= 0.0, "model", "beta", "must lie in [-1, 0]")
    for key in ("p", "q", "r"):
        if m[key] is not None:
            _range(m[key] >= 1, "model", key, "must lie in [1, inf]")
    for key in ("p0", "q0"):
        _range(i[key] >= 1, "initial", key, "must lie in [1, inf]")
    _range(i["beta0"] >= 0, "initial", "beta0", "must be >= 0")
    _range(i["kind"] in ("gaussian", "file"), "initial", "kind", "must be gaussian or file")
    _range(i["sigma"] > 0, "initial", "sigma", "must be positive")
    if i["center"] is not None:
        _range(len(i["center"]) == g["d"], "initial", "center", f"needs {g['d']} coordinates")
    _range(s["horizon"] > 0, "solver", "horizon", "must be positive")
    _range(s["M"] >= 8, "solver", "M", "time mesh needs at least 8 intervals")
    _range(s["grading"] >= 1, "solver", "grading", "must be >= 1")
    _range(s["picard_tol"] > 0, "solver", "picard_tol", "must be positive")
    _range(s["picard_max"] >= 1, "solver", "picard_max", "must be >= 1")
    _range(0 < s["vartheta"] < 1, "solver", "vartheta", "must lie in (0, 1)")
    _range(s["snapshots"] >= 1, "solver", "snapshots", "must be >= 1")
    _range(s["max_bisections"] >= 0, "solver", "max_bisections", "must be >= 0")
    _range(p["n"] >= 100, "particles", "n", "need at least 100 particles")
    _range(p["dt"] > 0, "particles", "dt", "must be positive")
    _range(p["dt"] <= s["horizon"] / 10 * (1 + 1e-12), "particles", "dt", "must be <= horizon/10")
    _range(p["snapshots"] >= 1, "particles", "snapshots", "must be >= 1")
    bw = p["bandwidth"]
    if bw != "auto":
        try:
            ok = float(bw) > 0
        except ValueError:
            raise ConfigTypeError(f"[particles] bandwidth = {bw!r}: expected a positive real or auto") from None
        _range(ok, "particles", "bandwidth", "must be positive")

    # cross-section references
    if s["kernel"] != "model":
        raise UnresolvedReferenceError(f"[solver] kernel = {s['kernel']!r} does not name a section defining a kernel")
    need = {"burgers": (1,), "biot_savart": (2,), "keller_segel": (2, 3)}.get(m["kind"])
    if need and g["d"] not in need:
        raise UnresolvedReferenceError(f"[model] kind = {m['kind']} is not defined in dimension [grid] d = {g['d']}")
    if m["kind"] == "custom":
        if not m["field"]:
            raise UnresolvedReferenceError("[model] kind = custom needs field = <kernel csv>")
        if not cfg.resolve_path(m["field"]).is_file():
            raise UnresolvedReferenceError(f"[model] field: file {m['field']!r} not found")
    if i["kind"] == "file":
        if not i["path"]:
            raise UnresolvedReferenceError("[initial] kind = file needs path = <density csv>")
        if not cfg.resolve_path(i["path"]).is_file():
            raise UnresolvedReferenceError(f"[initial] path: file {i['path']!r} not found")
    if m["kind"] in ("biot_savart", "keller_segel") and m["R"] + 1 > g["L"]:
        raise ConfigValueError(f"[model] R: kernel support R+1={m['R'] + 1:g} exceeds [grid] L={g['L']:g}")

    cfg.warnings.clear()
    beta = m["beta"]
    if beta is not None and beta == -1.0 and not m["has_div_bound"] and m["kind"] not in ("biot_savart", "keller_segel"):
        cfg.warnings.append("[model] beta = -1 without has_div_bound = true: condition (C2) unavailable")
