"""Command-line front end: load a run configuration, execute the requested
analysis stages, and write a schema-validated JSON report plus optional SVG
renderings.  Exit code 0 when every requested verdict passes, 2 when a
verdict is obstructed or failed, 1 for tool errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time

import jsonschema

from . import __version__, library
from .anosov import FlowModel, suspension_model, weak_foliations_on_torus
from .config import ConfigError, RunConfig, load_config, thread_cap
from .contact import al_check
from .foliation import Foliation2, SlopeSearch, compact_leaves, reeb_annuli, winding
from .prelag import pre_lagrangian_certificate
from .render import render_foliation

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "command", "config_digest", "threads", "ok", "stages"],
    "additionalProperties": False,
    "properties": {
        "version": {"type": "string"},
        "command": {"type": "string"},
        "config_digest": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "ok": {"type": "boolean"},
        "stages": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["seconds", "ok"],
                "properties": {
                    "seconds": {"type": "number"},
                    "ok": {"type": "boolean"},
                },
            },
        },
    },
}

COMMANDS = ("check-pair", "foliation", "pre-lagrangian", "render", "all")


class ToolError(Exception):
    pass


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".allab-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_model(cfg: RunConfig) -> FlowModel | None:
    if cfg.model_type == "none":
        return None
    A = ((cfg.matrix[0], cfg.matrix[1]), (cfg.matrix[2], cfg.matrix[3]))
    return suspension_model(A)


def _build_foliations(
    cfg: RunConfig, model: FlowModel | None
) -> tuple[Foliation2, Foliation2 | None]:
    if cfg.foliation_source == "model":
        if model is None:
            raise ToolError("foliation source 'model' but no model is configured")
        return weak_foliations_on_torus(model, model.fiber(cfg.fiber_z))
    if cfg.foliation_source == "builtin":
        if cfg.builtin == "two-reeb-band":
            return library.two_reeb_band(), None
        if cfg.builtin == "franks-williams":
            return library.franks_williams_pair()
        return library.eight_band_pair()
    F = Foliation2(cfg.v1, cfg.v2)
    G = None
    if cfg.partner_v1 is not None:
        G = Foliation2(cfg.partner_v1, cfg.partner_v2)
    return F, G


def _leaf_dict(leaf):
    return {
        "point": [float(c) for c in leaf.point],
        "cls": list(leaf.cls),
        "family": bool(leaf.family),
    }


def run(cfg: RunConfig, command: str, out_dir: str) -> tuple[int, dict]:
    if command not in COMMANDS:
        raise ToolError(f"unknown command {command!r}")
    os.makedirs(out_dir, exist_ok=True)
    model = _build_model(cfg)
    stages: dict[str, dict] = {}

    def stage(name, fn):
        t0 = time.monotonic()
        payload, ok = fn()
        payload["seconds"] = round(time.monotonic() - t0, 3)
        payload["ok"] = ok
        stages[name] = payload

    wants = (
        [command]
        if command != "all"
        else (["check-pair"] if model is not None else [])
        + ["foliation", "pre-lagrangian", "render"]
    )

    if "check-pair" in wants:
        if model is None:
            raise ToolError("check-pair needs a suspension model in the config")

        def check_pair():
            rep = al_check(model.standard_pair(), n=cfg.grid)
            return {"al": rep.to_dict()}, rep.verdict == "anosov_liouville"

        stage("check-pair", check_pair)

    needs_foliation = {"foliation", "pre-lagrangian", "render"} & set(wants)
    F = G = None
    if needs_foliation:
        F, G = _build_foliations(cfg, model)

    if "foliation" in wants:

        def foliation():
            leaves = compact_leaves(F)
            annuli = reeb_annuli(F, leaves)
            return {
                "winding": list(winding(F)),
                "compact_leaves": [_leaf_dict(l) for l in leaves],
                "reeb_annuli": [
                    {"axis": a.axis, "band": [float(b) for b in a.band]}
                    for a in annuli
                ],
            }, True

        stage("foliation", foliation)

    if "pre-lagrangian" in wants:

        def prelag():
            search = SlopeSearch(max_denominator=cfg.max_denominator)
            if model is not None:
                rep = pre_lagrangian_certificate(
                    model,
                    model.fiber(cfg.fiber_z),
                    scale_C=cfg.scale_c,
                    solver_n=cfg.solver_grid,
                    grid_n=cfg.grid,
                    tol=cfg.tolerance,
                    slope_search=search,
                )
                ok = rep.outcome == "certificate"
            else:
                if G is None:
                    raise ToolError(
                        "pre-lagrangian on foliation data needs a partner foliation"
                    )
                rep = pre_lagrangian_certificate(
                    foliations=(F, G),
                    scale_C=cfg.scale_c,
                    tol=cfg.tolerance,
                    slope_search=search,
                )
                ok = (
                    rep.outcome == "not_attempted"
                    and rep.obstruction is not None
                    and rep.obstruction.verdict == "passes_obstruction"
                )
            return {"prelag": rep.to_dict()}, ok

        stage("pre-lagrangian", prelag)

    if "render" in wants:

        def render():
            svg = render_foliation(F)
            path = os.path.join(out_dir, cfg.svg_name)
            _atomic_write(path, svg)
            return {"svg": cfg.svg_name, "bytes": len(svg)}, True

        stage("render", render)

    ok = all(s["ok"] for s in stages.values())
    report = {
        "version": __version__,
        "command": command,
        "config_digest": cfg.digest,
        "threads": thread_cap(),
        "ok": ok,
        "stages": stages,
    }
    jsonschema.validate(report, REPORT_SCHEMA)
    _atomic_write(
        os.path.join(out_dir, cfg.report_name),
        json.dumps(report, indent=2, sort_keys=True) + "\n",
    )
    return (0 if ok else 2), report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="allab",
        description="bicontact pair checks, torus foliation analysis, and "
        "pre-Lagrangian certificates",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--grid", type=int)
    parser.add_argument("--scale-C", dest="scale_c", type=float)
    parser.add_argument("--tolerance", type=float)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.grid is not None:
            if args.grid <= 0:
                raise ToolError("--grid must be positive")
            overrides["grid"] = args.grid
        if args.scale_c is not None:
            if args.scale_c <= 0:
                raise ToolError("--scale-C must be positive")
            overrides["scale_c"] = args.scale_c
        if args.tolerance is not None:
            if args.tolerance <= 0:
                raise ToolError("--tolerance must be positive")
            overrides["tolerance"] = args.tolerance
        if overrides:
            from dataclasses import replace

            cfg = replace(cfg, **overrides)
        code, report = run(cfg, args.command, args.out)
    except (ConfigError, ToolError) as e:
        print(f"allab: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"allab: {e}", file=sys.stderr)
        return 1
    for name, s in report["stages"].items():
        print(f"{name}: {'ok' if s['ok'] else 'FAIL'} ({s['seconds']:.3f}s)")
    print(f"report: {os.path.join(args.out, cfg.report_name)}")
    return code


if __name__ == "__main__":
    sys.exit(main())
