"""Command-line interface.

Subcommands build a scenario, run its verification pipeline, and write one
JSON report (plus optional CSV traces).  Exit status: 0 when every check in
the report passed, 1 on a verification failure or pipeline error, 2 on a
usage or configuration error.  Reports embed the effective configuration
and are byte-identical across runs with the same configuration on the same
platform.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields

import numpy as np

from . import __version__, pipeline
from .core import BACKEND
from .geodesics import write_trace_csv
from .pipeline import RunConfig
from .report import config_hash, dumps_report
from .scenarios import (
    DEFAULT_PROFILE,
    ScenarioError,
    build_flat_torus,
    build_levi_civita_family,
    build_sphere_projective,
    load_scenario,
)


class ConfigError(ValueError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="sampling seed (default 0)")
    common.add_argument("--samples", type=int, default=None, help="sample-point count (default 200)")
    common.add_argument("--tol", type=float, default=None,
                        help="classification tolerance (default 1e-8)")
    common.add_argument("--out", default=None, help="write the JSON report to this path")
    common.add_argument("--config", default=None, help="JSON file with flag defaults")

    p = argparse.ArgumentParser(prog="projeq",
                                description="verification toolkit for projectively "
                                            "equivalent metrics")
    p.add_argument("--version", action="version", version=f"projeq {__version__} ({BACKEND} core)")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("verify-example", parents=[common],
                       help="full pipeline on the torus product family")
    q.add_argument("--n", type=int, default=None, help="chart dimension >= 2 (default 3)")
    q.add_argument("--f", default=None, help=f"profile expression in x (default {DEFAULT_PROFILE!r})")
    q.add_argument("--orientable", action="store_true", default=None,
                   help="compose the candidate map with an orientation-reversing isometry")
    q.add_argument("--base", default=None, choices=["flat"],
                   help="base-block metric family (flat torus only)")

    q = sub.add_parser("pullback-check", parents=[common],
                       help="displayed pullback form vs pointwise pullback, plus the value-grid identity")
    q.add_argument("--f", default=None, help="profile expression in x")
    q.add_argument("--grid", type=int, default=None, help="value-grid resolution (default 50)")

    q = sub.add_parser("torus", parents=[common], help="flat torus with a unimodular lattice map")
    q.add_argument("--matrix", default=None, help="a,b,c,d integer entries, row-major, det 1")

    q = sub.add_parser("sphere", parents=[common],
                       help="round-sphere gnomonic patch with a projective-linear map")
    q.add_argument("--matrix", default=None, help="9 comma-separated reals, row-major, det 1")

    q = sub.add_parser("representation", parents=[common],
                       help="2x2 solution-basis action, composition law, counting conclusion")
    q.add_argument("--scenario", default=None, help="builtin name or scenario JSON path")
    q.add_argument("--maps", default=None, help="comma-separated map labels (default: all)")

    q = sub.add_parser("lemma1", parents=[common],
                       help="smallest power k with cos(k a) + s sin(k a) <= 0")
    q.add_argument("--alpha", type=float, default=None, help="rotation angle in radians")
    q.add_argument("--s", type=float, default=None, help="spectrum entry")
    q.add_argument("--kmax", type=int, default=None, help="search cutoff (default 10^6)")

    q = sub.add_parser("geodesics", parents=[common],
                       help="geodesic shots: energy conservation, cross-validation, CSV export")
    q.add_argument("--scenario", default=None, help="builtin name or scenario JSON path")
    q.add_argument("--shots", type=int, default=None, help="number of shots (default 20)")
    q.add_argument("--emit-csv", dest="emit_csv", default=None,
                   help="write per-shot trace CSVs with this path prefix")

    return p


def _merge_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    """Merge CLI flags over config-file values over built-in defaults.

    Returns the effective config plus the set of keys pinned by the user
    (flag or config file); scenario-file sampling hints only fill unpinned
    keys.
    """
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config!r}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object of flag values")
    known = {f.name for f in dataclass_fields(RunConfig)}
    unknown = set(file_cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    cfg = RunConfig(command=args.command)
    pinned: set[str] = set()
    for name in known:
        if name == "command":
            continue
        explicit = getattr(args, name, None)
        if explicit is not None:
            setattr(cfg, name, explicit)
            pinned.add(name)
        elif name in file_cfg:
            setattr(cfg, name, file_cfg[name])
            pinned.add(name)
    if cfg.samples < 3:
        raise ConfigError("--samples must be at least 3")
    return cfg, pinned


def _parse_matrix(text: str, count: int) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --matrix entry: {exc}") from None
    if len(vals) != count:
        raise ConfigError(f"--matrix needs {count} comma-separated entries, got {len(vals)}")
    return vals


def _apply_sampling_hints(sc, cfg: RunConfig, pinned: set[str]) -> None:
    # scenario files may suggest a sampling config; user flags win
    hints = sc.extras.get("sampling", {}) if isinstance(sc.extras, dict) else {}
    for key in ("samples", "seed"):
        if key in hints and key not in pinned:
            setattr(cfg, key, int(hints[key]))


def _run(cfg: RunConfig, pinned: set[str] = frozenset()) -> tuple[dict, bool]:
    scenario_doc = None
    if cfg.command == "verify-example":
        if cfg.base != "flat":
            raise ConfigError("only the flat base family is built in")
        sc = build_levi_civita_family(n=cfg.n, f=cfg.f, orientable=bool(cfg.orientable))
        checks, artifacts = pipeline.run_family(sc, cfg)
        scenario_doc = sc.name
    elif cfg.command == "pullback-check":
        checks, artifacts = pipeline.run_pullback_check(cfg)
    elif cfg.command == "torus":
        if cfg.matrix is None:
            raise ConfigError("torus requires --matrix a,b,c,d")
        vals = cfg.matrix if isinstance(cfg.matrix, list) else _parse_matrix(cfg.matrix, 4)
        sc = build_flat_torus(np.array(vals, dtype=float).reshape(2, 2))
        checks, artifacts = pipeline.run_torus(sc, cfg)
        scenario_doc = sc.name
    elif cfg.command == "sphere":
        if cfg.matrix is None:
            raise ConfigError("sphere requires --matrix with 9 entries")
        vals = cfg.matrix if isinstance(cfg.matrix, list) else _parse_matrix(cfg.matrix, 9)
        sc = build_sphere_projective(np.array(vals, dtype=float).reshape(3, 3))
        checks, artifacts = pipeline.run_sphere(sc, cfg)
        scenario_doc = sc.name
    elif cfg.command == "representation":
        if not cfg.scenario:
            raise ConfigError("representation requires --scenario")
        sc = load_scenario(cfg.scenario)
        _apply_sampling_hints(sc, cfg, pinned)
        try:
            checks, artifacts = pipeline.run_representation(sc, cfg)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        scenario_doc = sc.name
    elif cfg.command == "lemma1":
        if cfg.alpha is None or cfg.s is None:
            raise ConfigError("lemma1 requires --alpha and --s")
        checks, artifacts = pipeline.run_lemma1(cfg)
    elif cfg.command == "geodesics":
        if not cfg.scenario:
            raise ConfigError("geodesics requires --scenario")
        sc = load_scenario(cfg.scenario)
        _apply_sampling_hints(sc, cfg, pinned)
        checks, artifacts = pipeline.run_geodesics(sc, cfg)
        scenario_doc = sc.name
    else:  # pragma: no cover - argparse guards this
        raise ConfigError(f"unknown command {cfg.command!r}")

    traces = artifacts.pop("_traces", None)
    chash = config_hash(cfg.as_dict())
    if cfg.emit_csv and traces:
        for i, tr in enumerate(traces):
            write_trace_csv(f"{cfg.emit_csv}_shot{i:02d}_{tr.metric_id}.csv", tr, chash)

    passed = all(c["passed"] for c in checks)
    report = {
        "schema": 1,
        "tool": {"name": "projeq", "version": __version__, "backend": BACKEND},
        "config": cfg.as_dict(),
        "config_hash": chash,
        "scenario": scenario_doc,
        "checks": checks,
        "artifacts": artifacts,
        "passed": passed,
    }
    return report, passed


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, pinned = _merge_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report, passed = _run(cfg, pinned)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pipeline failure: report it, exit 1
        report = {
            "schema": 1,
            "tool": {"name": "projeq", "version": __version__, "backend": BACKEND},
            "config": cfg.as_dict(),
            "error": f"{type(exc).__name__}: {exc}",
            "checks": [],
            "passed": False,
        }
        passed = False
    text = dumps_report(report)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
