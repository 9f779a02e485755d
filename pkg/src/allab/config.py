"""Run configuration: a small INI-style file describing a model, foliation
data, analysis parameters, and output names.  Validation reports every
violation at once instead of stopping at the first.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field

from .expr import Expr, ExprError, parse_expr


class ConfigError(Exception):
    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )


_BUILTIN_FOLIATIONS = ("two-reeb-band", "franks-williams", "eight-band")

_SECTIONS = {
    "model": {"type", "matrix", "fiber_z"},
    "foliation": {"source", "builtin", "v1", "v2", "partner_v1", "partner_v2"},
    "analysis": {
        "grid",
        "solver_grid",
        "scale_c",
        "tolerance",
        "max_denominator",
    },
    "output": {"report", "svg"},
}


@dataclass(frozen=True)
class RunConfig:
    path: str
    digest: str
    model_type: str = "none"  # none | suspension
    matrix: tuple[int, int, int, int] | None = None
    fiber_z: float = 0.0
    foliation_source: str = "model"  # model | builtin | field
    builtin: str | None = None
    v1: Expr | None = None
    v2: Expr | None = None
    partner_v1: Expr | None = None
    partner_v2: Expr | None = None
    grid: int = 12
    solver_grid: int = 32
    scale_c: float = 10.0
    tolerance: float = 1e-6
    max_denominator: int = 10
    report_name: str = "report.json"
    svg_name: str = "foliation.svg"
    raw: dict = field(default_factory=dict)


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    parser = configparser.ConfigParser()
    violations: list[str] = []
    try:
        parser.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError([f"parse error: {e}"]) from e

    for section in parser.sections():
        if section not in _SECTIONS:
            violations.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                violations.append(f"unknown key {section}.{key}")

    values: dict = {}

    def get(section, key, default=None):
        if parser.has_option(section, key):
            return parser.get(section, key).strip()
        return default

    def get_float(section, key, default, positive=False):
        raw = get(section, key)
        if raw is None:
            return default
        try:
            v = float(raw)
        except ValueError:
            violations.append(f"{section}.{key}: not a number: {raw!r}")
            return default
        if positive and v <= 0:
            violations.append(f"{section}.{key}: must be positive, got {v}")
        return v

    def get_int(section, key, default, positive=True):
        raw = get(section, key)
        if raw is None:
            return default
        try:
            v = int(raw)
        except ValueError:
            violations.append(f"{section}.{key}: not an integer: {raw!r}")
            return default
        if positive and v <= 0:
            violations.append(f"{section}.{key}: must be positive, got {v}")
        return v

    def get_expr(section, key):
        raw = get(section, key)
        if raw is None:
            return None
        try:
            return parse_expr(raw)
        except ExprError as e:
            violations.append(f"{section}.{key}: does not parse: {e}")
            return None

    model_type = get("model", "type", "none") if parser.has_section("model") else "none"
    if model_type not in ("none", "suspension"):
        violations.append(f"model.type: unknown type {model_type!r}")
        model_type = "none"
    matrix = None
    if model_type == "suspension":
        raw = get("model", "matrix")
        if raw is None:
            violations.append("model.matrix: required for a suspension model")
        else:
            parts = raw.replace(",", " ").split()
            if len(parts) != 4 or not all(
                p.lstrip("-").isdigit() for p in parts
            ):
                violations.append(
                    f"model.matrix: expected four integers, got {raw!r}"
                )
            else:
                matrix = tuple(int(p) for p in parts)
    fiber_z = get_float("model", "fiber_z", 0.0)

    source = get("foliation", "source")
    if source is None:
        source = "model" if model_type != "none" else None
        if source is None and parser.has_section("foliation"):
            violations.append("foliation.source: required without a model")
    if source is not None and source not in ("model", "builtin", "field"):
        violations.append(f"foliation.source: unknown source {source!r}")
        source = None
    builtin = get("foliation", "builtin")
    if source == "builtin":
        if builtin is None:
            violations.append("foliation.builtin: required when source = builtin")
        elif builtin not in _BUILTIN_FOLIATIONS:
            violations.append(
                f"foliation.builtin: unknown name {builtin!r}; "
                f"choose from {', '.join(_BUILTIN_FOLIATIONS)}"
            )
    v1 = get_expr("foliation", "v1")
    v2 = get_expr("foliation", "v2")
    if source == "field" and (get("foliation", "v1") is None or get("foliation", "v2") is None):
        violations.append("foliation.v1/v2: required when source = field")
    partner_v1 = get_expr("foliation", "partner_v1")
    partner_v2 = get_expr("foliation", "partner_v2")
    if (partner_v1 is None) != (partner_v2 is None):
        violations.append("foliation.partner_v1/partner_v2: declare both or neither")
    if source == "model" and model_type == "none":
        violations.append("foliation.source: 'model' needs a [model] section")

    values.update(
        model_type=model_type,
        matrix=matrix,
        fiber_z=fiber_z,
        foliation_source=source or "model",
        builtin=builtin,
        v1=v1,
        v2=v2,
        partner_v1=partner_v1,
        partner_v2=partner_v2,
        grid=get_int("analysis", "grid", 12),
        solver_grid=get_int("analysis", "solver_grid", 32),
        scale_c=get_float("analysis", "scale_c", 10.0, positive=True),
        tolerance=get_float("analysis", "tolerance", 1e-6, positive=True),
        max_denominator=get_int("analysis", "max_denominator", 10),
        report_name=get("output", "report", "report.json"),
        svg_name=get("output", "svg", "foliation.svg"),
    )

    if violations:
        raise ConfigError(violations)
    return RunConfig(
        path=path,
        digest=_digest(text),
        raw={s: dict(parser[s]) for s in parser.sections()},
        **values,
    )


def thread_cap() -> int:
    """Parallelism cap from ALLAB_THREADS; at least 1."""
    raw = os.environ.get("ALLAB_THREADS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
