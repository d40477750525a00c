"""Run configuration: a flat INI file with typed, validated keys.

Example::

    [model]
    name = lattice_rcm
    weights = uniform
    low = 1
    high = 2

    [geometry]
    d = 2
    ells = 16, 32, 64

    [sampling]
    seeds = 0:10
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .env import (BondPercolation, ConstantWeights, DiscreteWeights, LatticeRCM, MillerAbrahams, PeriodicWeights,
                  UniformWeights)
from .errors import ConfigParseError, ConfigValidationError, ParameterError

COMMANDS = ("solve", "sweep", "corrector", "direction", "weakprobe", "mott")


# ------------------------------------------------------------ value parsers


def _float(text: str) -> float:
    return float(text)


def _int(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    """Comma list, with ``a:b`` as shorthand for ``a, a+1, ..., b-1``."""
    out: list[int] = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            a, b = tok.split(":", 1)
            out.extend(range(_int(a), _int(b)))
        else:
            out.append(_int(tok))
    return tuple(out)


def _matrix(text: str) -> tuple[tuple[float, ...], ...]:
    rows = tuple(tuple(float(t) for t in row.split(",") if t.strip()) for row in text.split(";") if row.strip())
    if len({len(r) for r in rows}) > 1:
        raise ValueError("ragged matrix")
    return rows


def _word(text: str) -> str:
    return text.strip().lower()


# (parser, default); a default of REQUIRED means the key must be present when its section is used
REQUIRED = object()

SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "run": {"command": (_word, None)},
    "model": {
        "name": (_word, REQUIRED),
        "weights": (_word, "constant"),
        "axis_weights": (_floats, None),
        "low": (_float, None),
        "high": (_float, None),
        "values": (_floats, None),
        "probs": (_floats, None),
        "pattern": (_matrix, None),
        "p": (_float, None),
        "gamma": (_float, None),
        "beta": (_float, None),
        "alpha": (_float, 0.0),
        "A": (_float, 1.0),
        "cutoff": (_float, 1e-12),
        "intensity": (_float, None),
    },
    "geometry": {
        "d": (_int, REQUIRED),
        "direction": (_floats, None),
        "ells": (_floats, None),
        "margin": (_float, None),
        "frame": (_word, "auto"),
        "matrix": (_matrix, None),
    },
    "solver": {
        "tol": (_float, 1e-12),
        "max_iter": (_int, None),
        "n_gamma": (_int, 11),
        "method": (_word, "auto"),
        "crossings": (_bool, False),
    },
    "sampling": {
        "seeds": (_ints, (0,)),
        "torus_n": (_int, None),
        "torus_seeds": (_ints, None),
        "betas": (_floats, None),
    },
    "output": {
        "dir": (str, "ohm_out"),
        "dump_network": (_bool, False),
        "dump_solution": (_bool, False),
        "dump_corrector": (_bool, False),
    },
}

# sections that must appear in the file for each command
NEEDS = {
    "solve": ("model", "geometry"),
    "sweep": ("model", "geometry", "sampling"),
    "corrector": ("model", "geometry", "sampling"),
    "direction": ("geometry",),
    "weakprobe": ("model", "geometry", "sampling"),
    "mott": ("model", "geometry", "sampling"),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    sections: Mapping[str, Mapping[str, Any]]
    present: frozenset[str]

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def canonical(self) -> dict:
        """Typed, defaults-filled view without the output block (the hashed content)."""
        return {"command": self.command,
                **{s: {k: _jsonable(v) for k, v in sorted(vals.items())}
                   for s, vals in sorted(self.sections.items()) if s not in ("output", "run")}}

    def hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, float):
        return repr(v)  # keeps -0.0/1e-12 distinctions exact and stable
    return v


# ---------------------------------------------------------------- loading


def parse_text(text: str, overrides: Sequence[str] = ()) -> tuple[dict[str, dict[str, str]], set[str]]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case sensitive ("A")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(f"malformed config: {exc}") from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigParseError(f"override {item!r} must look like section.key=value")
        raw.setdefault(section, {})[name] = value.strip()
    present = set(raw)
    return raw, present


def build_config(raw: Mapping[str, Mapping[str, str]], present: set[str], command: str | None = None) -> RunConfig:
    for section, vals in raw.items():
        if section not in SCHEMA:
            raise ConfigParseError(f"unknown section [{section}]")
        for key in vals:
            if key not in SCHEMA[section]:
                raise ConfigParseError(f"unknown key {section}.{key}")
    typed: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        vals = raw.get(section, {})
        typed[section] = {}
        for key, (parse, default) in keys.items():
            if key in vals:
                try:
                    typed[section][key] = parse(vals[key])
                except ValueError as exc:
                    raise ConfigParseError(f"{section}.{key}: cannot parse {vals[key]!r} ({exc})") from None
            elif default is REQUIRED:
                typed[section][key] = None
            else:
                typed[section][key] = default
    cmd = command or typed["run"]["command"]
    if cmd is None:
        raise ConfigValidationError("no command given")
    if cmd not in COMMANDS:
        raise ConfigValidationError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    cfg = RunConfig(command=cmd, sections=typed, present=frozenset(present))
    validate(cfg)
    return cfg


def load_config(path: str | Path, overrides: Sequence[str] = (), command: str | None = None) -> RunConfig:
    text = Path(path).read_text()  # OSError propagates: reported as an I/O failure
    raw, present = parse_text(text, overrides)
    return build_config(raw, present, command)


# ------------------------------------------------------------- validation


def _need(cfg: RunConfig, section: str, key: str):
    v = cfg.get(section, key)
    if v is None or (isinstance(v, tuple) and not v):
        raise ConfigValidationError(f"{section}.{key} is required for command {cfg.command!r}")
    return v


def validate(cfg: RunConfig) -> None:
    cmd = cfg.command
    for section in NEEDS[cmd]:
        if section not in cfg.present:
            raise ConfigValidationError(f"missing [{section}] block required by command {cmd!r}")
    for section, keys in SCHEMA.items():
        if section in cfg.present or section in NEEDS[cmd]:
            for key, (_, default) in keys.items():
                if default is REQUIRED and cfg.get(section, key) is None:
                    raise ConfigValidationError(f"{section}.{key} is required")
    d = cfg.get("geometry", "d")
    if d is not None and d < 1:
        raise ConfigValidationError("geometry.d must be at least 1")
    direction = cfg.get("geometry", "direction")
    if direction is not None:
        if len(direction) != d:
            raise ConfigValidationError(f"geometry.direction needs {d} components")
        if not any(direction):
            raise ConfigValidationError("geometry.direction must be nonzero")
    if cfg.get("geometry", "frame") not in ("auto", "box"):
        raise ConfigValidationError("geometry.frame must be 'auto' or 'box'")
    solver = cfg.sections["solver"]
    if not solver["tol"] > 0:
        raise ConfigValidationError("solver.tol must be positive")
    if solver["max_iter"] is not None and solver["max_iter"] < 1:
        raise ConfigValidationError("solver.max_iter must be positive")
    if solver["n_gamma"] < 1:
        raise ConfigValidationError("solver.n_gamma must be positive")
    if solver["method"] not in ("cg", "direct", "auto"):
        raise ConfigValidationError("solver.method must be cg, direct or auto")
    if cmd in ("solve", "sweep", "weakprobe"):
        ells = _need(cfg, "geometry", "ells")
        if any(not e > 0 for e in ells) or any(not b > a for a, b in zip(ells, ells[1:])):
            raise ConfigValidationError("geometry.ells must be positive and increasing")
    if cmd == "solve" and (len(cfg.get("geometry", "ells")) != 1 or len(cfg.get("sampling", "seeds")) != 1):
        raise ConfigValidationError("command 'solve' takes exactly one geometry.ells value and one seed")
    if cmd in ("sweep", "weakprobe", "corrector", "mott"):
        seeds = cfg.get("sampling", "seeds")
        if not seeds:
            raise ConfigValidationError("sampling.seeds must not be empty")
    if cmd in ("corrector", "mott"):
        if _need(cfg, "sampling", "torus_n") < 2:
            raise ConfigValidationError("sampling.torus_n must be at least 2")
    n = cfg.get("sampling", "torus_n")
    if n is not None and n < 2:
        raise ConfigValidationError("sampling.torus_n must be at least 2")
    if cmd == "mott":
        betas = _need(cfg, "sampling", "betas")
        if any(b < 0 for b in betas) or any(not b > a for a, b in zip(betas, betas[1:])):
            raise ConfigValidationError("sampling.betas must be nonnegative and increasing")
        if cfg.get("model", "name") != "miller_abrahams":
            raise ConfigValidationError("command 'mott' needs model.name = miller_abrahams")
    if cmd == "direction":
        matrix = cfg.get("geometry", "matrix")
        if matrix is None:
            if "model" not in cfg.present or cfg.get("sampling", "torus_n") is None:
                raise ConfigValidationError("command 'direction' needs geometry.matrix or a [model] block with "
                                            "sampling.torus_n")
        else:
            M = np.asarray(matrix, dtype=float)
            if M.shape != (d, d):
                raise ConfigValidationError(f"geometry.matrix must be {d}x{d}")
            if np.max(np.abs(M - M.T)) > 1e-10:
                raise ConfigValidationError("geometry.matrix must be symmetric")
    if "model" in cfg.present:
        try:
            make_model(cfg)
        except ParameterError as exc:
            raise ConfigValidationError(f"model: {exc}") from None
        if cfg.get("model", "name") == "miller_abrahams" and cmd != "direction":
            i = _need(cfg, "model", "intensity")
            if not i > 0:
                raise ConfigValidationError("model.intensity must be positive")


# ----------------------------------------------------------- model building


def make_model(cfg: RunConfig):
    m = cfg.sections["model"]
    d = cfg.get("geometry", "d") or 1
    name = m["name"]
    if name == "lattice_rcm":
        return LatticeRCM(_weight_law(m, d))
    if name == "bond_percolation":
        if m["p"] is None:
            raise ConfigValidationError("model.p is required for bond_percolation")
        if not 0.0 <= m["p"] <= 1.0:
            raise ParameterError("p must lie in [0, 1]")
        return BondPercolation(m["p"])
    if name == "miller_abrahams":
        for key in ("gamma", "beta"):
            if m[key] is None and not (key == "beta" and cfg.command == "mott"):
                raise ConfigValidationError(f"model.{key} is required for miller_abrahams")
        beta = m["beta"] if m["beta"] is not None else 0.0
        return MillerAbrahams(gamma=m["gamma"], beta=beta, alpha=m["alpha"], A=m["A"], cutoff=m["cutoff"])
    raise ConfigValidationError(f"unknown model.name {name!r}")


def _weight_law(m: Mapping[str, Any], d: int):
    kind = m["weights"]
    if kind == "constant":
        w = m["axis_weights"] or (1.0,)
        if len(w) == 1:
            w = w * d
        if len(w) != d:
            raise ConfigValidationError(f"model.axis_weights needs 1 or {d} entries")
        return ConstantWeights(tuple(w))
    if kind == "uniform":
        if m["low"] is None or m["high"] is None:
            raise ConfigValidationError("model.low and model.high are required for uniform weights")
        return UniformWeights(m["low"], m["high"])
    if kind == "discrete":
        if not m["values"] or not m["probs"]:
            raise ConfigValidationError("model.values and model.probs are required for discrete weights")
        return DiscreteWeights(tuple(m["values"]), tuple(m["probs"]))
    if kind == "periodic":
        if not m["pattern"]:
            raise ConfigValidationError("model.pattern is required for periodic weights")
        if len(m["pattern"]) != d:
            raise ConfigValidationError(f"model.pattern needs one row per axis ({d})")
        return PeriodicWeights(tuple(tuple(r) for r in m["pattern"]))
    raise ConfigValidationError(f"unknown model.weights {kind!r}")

