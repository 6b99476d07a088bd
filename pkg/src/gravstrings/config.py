"""Run configuration: an INI file with [model], [numerics] and [output] sections.

Parsing is done by :mod:`configparser`; this module adds a strict schema
(unknown keys and sections are errors with line and column), typed values and
a canonical serialization that round-trips.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .model import ModelParams, Regime, beta_topological, make_params

SCHEMA: dict[str, dict[str, type]] = {
    "model": {
        "regime": str, "n": int, "g": float, "a": float, "kappa": float, "lambda": float,
        "beta": float, "alpha": float, "points": str, "multiplicity": str,
    },
    "numerics": {
        "t_min": float, "t_max": float, "step_tol": float, "n_out": int,
        "shoot_tol": float, "rtol": float, "atol": float, "level": int, "sigma": float,
        "delta_k_max": int, "delta_finish_at_zero": bool, "iter_tol": float, "margin": float,
        "einstein_t_min": float, "regime_snap_rtol": float,
    },
    "output": {"dir": str, "plots": bool},
}

DEFAULTS = {
    "kappa": 1.0, "t_min": -30.0, "t_max": 20.0, "step_tol": 1e-12, "n_out": 2000,
    "shoot_tol": 1e-8, "rtol": 1e-12, "atol": 1e-14, "level": 5, "delta_k_max": 12,
    "delta_finish_at_zero": True, "iter_tol": 1e-10, "margin": 0.1,
    "einstein_t_min": -5.0, "regime_snap_rtol": 1e-6, "dir": "output", "plots": True,
}

REGIME_ALIASES = {"topo": Regime.TOPOLOGICAL_PLANE, "nontopo": Regime.NONTOPOLOGICAL_PLANE,
                  "sphere": Regime.COMPACT_SPHERE}

POSITIVE = ("step_tol", "shoot_tol", "rtol", "atol", "iter_tol", "regime_snap_rtol",
            "kappa", "lambda", "beta", "alpha", "sigma", "margin", "g", "a")


def parse_regime(text: str) -> Regime:
    key = text.strip().lower()
    if key in REGIME_ALIASES:
        return REGIME_ALIASES[key]
    try:
        return Regime(key)
    except ValueError:
        raise ValidationError(f"unknown regime {text!r}") from None


def _locate(text: str, section: str | None, key: str | None):
    """(line, column) of a section header or of a key inside a section, 1-based."""
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            if key is None and current == section:
                return lineno, raw.index("[") + 1
            continue
        if key is not None and current == section and "=" in raw:
            name = raw.split("=", 1)[0].strip().lower()
            if name == key:
                return lineno, raw.index(raw.lstrip()[0]) + 1
    return None, None


def _convert(value: str, kind: type, where):
    text = value.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            out = float(text)
            if not math.isfinite(out):
                raise ValueError
            return out
        return text
    except ValueError:
        raise ParseError(f"cannot read {text!r} as {kind.__name__}", *where) from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Typed configuration; only explicitly given keys are stored, defaults are applied on read."""

    model: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def get(self, key: str, default=None):
        for section in (self.model, self.numerics, self.output):
            if key in section:
                return section[key]
        return DEFAULTS.get(key, default)

    @property
    def regime(self) -> Regime | None:
        value = self.model.get("regime")
        return None if value is None else parse_regime(value)

    def with_values(self, **updates) -> "RunConfig":
        sections = {"model": dict(self.model), "numerics": dict(self.numerics),
                    "output": dict(self.output)}
        for key, value in updates.items():
            for name, keys in SCHEMA.items():
                if key in keys:
                    sections[name][key] = keys[key](value) if keys[key] is not str else str(value)
                    break
            else:
                raise ValidationError(f"unknown key {key!r}")
        out = RunConfig(**sections)
        out.validate()
        return out

    def validate(self) -> None:
        for section in (self.model, self.numerics, self.output):
            for key, value in section.items():
                if key in POSITIVE and not value > 0:
                    raise ValidationError(f"{key} must be positive, got {value!r}")
        if "g" in self.model and "a" in self.model:
            raise ValidationError("give either g or a, not both")
        if "lambda" in self.model and "beta" in self.model:
            raise ValidationError("give either lambda or beta, not both")
        if self.regime is not None:
            self.regime  # raises on unknown names
        if "n" in self.model and self.model["n"] < 1:
            raise ValidationError("n must be a positive integer")
        if self.get("t_min") >= self.get("t_max"):
            raise ValidationError("t_min must be below t_max")
        if self.get("level") < 0:
            raise ValidationError("level must be nonnegative")

    def coupling(self, regime: Regime):
        """``(a, snapped_from)``: a = 4 pi g, snapped onto the regime identity when close.

        Decimal input such as g = 0.0795775 only approximates 1/(4 pi); within
        ``regime_snap_rtol`` the value is replaced by the exact one and the
        original recorded.
        """
        N = self.get("n")
        if N is None:
            raise ValidationError("n is required")
        if "a" in self.model:
            a = self.model["a"]
        elif "g" in self.model:
            a = 4.0 * math.pi * self.model["g"]
        else:
            raise ValidationError("one of g or a is required")
        target = {Regime.TOPOLOGICAL_PLANE: 1.0, Regime.COMPACT_SPHERE: 2.0}.get(regime)
        if target is not None and a * N != target and abs(a * N / target - 1.0) <= self.get(
            "regime_snap_rtol"
        ):
            return target / N, a
        return a, None

    def params(self, regime: Regime | None = None) -> ModelParams:
        regime = regime or self.regime
        if regime is None:
            raise ValidationError("regime not given")
        a, _ = self.coupling(regime)
        N, kappa = self.get("n"), self.get("kappa")
        G = a / (4.0 * math.pi)
        beta = self.model.get("beta")
        lam = self.model.get("lambda")
        if regime is Regime.TOPOLOGICAL_PLANE and beta is None and lam is None:
            beta = beta_topological(N, a)
        if lam is None:
            lam = 1.0
        return make_params(N, G, kappa, lam, regime, beta=beta)

    def points(self):
        text = self.model.get("points")
        if text is None:
            return None, None
        try:
            pts = np.array([[float(x) for x in p.split()] for p in text.split(";") if p.strip()])
        except ValueError:
            raise ValidationError(f"cannot read points {text!r}") from None
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValidationError("points must be ';'-separated triples 'x y z'")
        mult = self.model.get("multiplicity")
        if mult is not None:
            mult = [int(m) for m in mult.replace(",", " ").split()]
        return pts, mult

    def delta_schedule(self):
        sched = [2.0 ** (-k) for k in range(self.get("delta_k_max") + 1)]
        return sched + [0.0] if self.get("delta_finish_at_zero") else sched


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",), empty_lines_in_values=False,
        default_section="\x00",
    )
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("content before the first [section]", exc.lineno, 1) from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r}", exc.lineno, 1) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line (expected key = value)", lineno, 1) from None

    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ParseError(f"unknown section [{name}]", *_locate(text, name, None))
        values = {}
        for key, raw in parser.items(name):
            where = _locate(text, name, key)
            if key not in SCHEMA[name]:
                raise ParseError(f"unknown key {key!r} in [{name}]", *where)
            values[key] = _convert(raw, SCHEMA[name][key], where)
        sections[name] = values
    cfg = RunConfig(**sections)
    cfg.validate()
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text: schema order for sections and keys, ``key = value``, one blank line between sections."""
    blocks = []
    for name, keys in SCHEMA.items():
        values = getattr(cfg, name)
        if not values:
            continue
        lines = [f"[{name}]"] + [f"{k} = {_format(values[k])}" for k in keys if k in values]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
