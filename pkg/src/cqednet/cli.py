"""Command-line entry point.

Exit codes: 0 success, 1 runtime or model error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

from .cavity_physics import physics_report
from .code_layout import assign_cavities, build_layout
from .config import ConfigError, ExperimentConfig, load_config
from .harness import (
    BOUNDARY_COLUMNS,
    RESULT_COLUMNS,
    TRACE_COLUMNS,
    boundary_rows,
    boundary_search,
    build_manifest,
    calibrate_alpha,
    physics_point,
    run_point,
    trace_rows,
    write_csv,
    write_manifest,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML config or manifest.json to reproduce")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--threads", type=int)
    p.add_argument("--structure", choices=["4", "d", "n"])
    p.add_argument("--decoder", choices=["uniform", "weighted"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--g", type=float, help="coupling g/gamma")
    p.add_argument("--kappa-in", type=float, help="internal decay kappa_in/gamma")
    p.add_argument("--T2", type=float, help="dephasing time T2*gamma")
    p.add_argument("--distances", type=lambda s: [int(x) for x in s.split(",")])
    p.add_argument("--p-sw", type=float)
    p.add_argument("--p-cir", type=float)
    p.add_argument("--synthetic-loss", type=float)
    p.add_argument("--synthetic-infidelity", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cqednet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [
        ("physics", "optimized operating point and derived noise parameters"),
        ("layout", "lattice, cavity assignment and schedule as JSON"),
        ("simulate", "logical error rates at the configured point"),
        ("boundary", "requirement boundary p_L(d+2)/p_L(d) = 1 over the campaign grid"),
        ("calibrate-alpha", "weighted-decoder sweep over alpha"),
    ]:
        _common(sub.add_parser(name, help=text))
    return parser


def _apply_flags(cfg: ExperimentConfig, a: argparse.Namespace) -> ExperimentConfig:
    return cfg.with_overrides(
        cavity={"g": a.g, "kappa_in": a.kappa_in, "T2": a.T2},
        decoder={"kind": a.decoder, "alpha": a.alpha},
        run={
            "seed": a.seed, "shots": a.shots, "threads": a.threads, "structure": a.structure,
            "distances": a.distances, "p_sw": a.p_sw, "p_cir": a.p_cir,
            "synthetic_loss": a.synthetic_loss, "synthetic_infidelity": a.synthetic_infidelity,
        },
    )


def _cmd_physics(cfg, out: Path) -> None:
    d = max(cfg.run.distances)
    params, pulse, _ = physics_point(cfg, d)
    text = physics_report(params, pulse, cfg.cavity.loss_model)
    sys.stdout.write(text)
    (out / "physics.txt").write_text(text, encoding="utf-8")


def _cmd_layout(cfg, out: Path) -> None:
    for d in cfg.run.distances:
        doc = assign_cavities(build_layout(d), cfg.run.structure).to_json()
        path = out / f"layout_d{d}_{cfg.run.structure}.json"
        path.write_text(doc + "\n", encoding="utf-8")
        print(path)


def _cmd_simulate(cfg, out: Path, command: str) -> None:
    rows = run_point(cfg)
    path = out / "results.csv"
    write_csv(path, rows, RESULT_COLUMNS)
    write_manifest(out / "manifest.json", build_manifest(cfg, command, {"results.csv": str(path)}))
    for r in rows:
        print(f"d={r['d']} p_L={r['p_L']:.4e} [{r['ci_low']:.3e}, {r['ci_high']:.3e}] ({r['failures']}/{r['shots']})")


def _cmd_boundary(cfg, out: Path, command: str) -> None:
    results = []
    for kind in cfg.campaign.decoders:
        alpha = cfg.decoder.alpha if kind == "weighted" else None
        for kin in cfg.campaign.kappa_in:
            res = boundary_search(cfg, kin, kind, alpha)
            results.append((kind, alpha, res))
            flag = "" if res.resolved else " (unresolved)"
            print(f"{kind} kappa_in={kin:g}: g*={res.g_star:.4g} in [{res.g_lo:.4g}, {res.g_hi:.4g}]{flag}")
    path = out / "boundary.csv"
    write_csv(path, boundary_rows(cfg, results), BOUNDARY_COLUMNS)
    trace = out / "boundary_trace.csv"
    write_csv(trace, trace_rows(results), TRACE_COLUMNS)
    outputs = {"boundary.csv": str(path), "boundary_trace.csv": str(trace)}
    write_manifest(out / "manifest.json", build_manifest(cfg, command, outputs))


def _cmd_calibrate(cfg, out: Path, command: str) -> None:
    rows = calibrate_alpha(cfg)
    path = out / "alpha.csv"
    cols = ["alpha", "g", "kappa_in", "d", "shots", "failures", "p_L", "ci_low", "ci_high"]
    write_csv(path, rows, cols)
    best = min(rows, key=lambda r: (r["p_L"], r["alpha"]))
    write_manifest(
        out / "manifest.json",
        build_manifest(cfg, command, {"alpha.csv": str(path)}, {"best_alpha": best["alpha"]}),
    )
    for r in rows:
        print(f"alpha={r['alpha']:g} p_L={r['p_L']:.4e}")
    print(f"best alpha = {best['alpha']:g}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _apply_flags(load_config(args.config), args)
        args.out.mkdir(parents=True, exist_ok=True)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    command = " ".join(["cqednet"] + list(sys.argv[1:] if argv is None else argv))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "physics":
                _cmd_physics(cfg, args.out)
            elif args.command == "layout":
                _cmd_layout(cfg, args.out)
            elif args.command == "simulate":
                _cmd_simulate(cfg, args.out, args.command)
            elif args.command == "boundary":
                _cmd_boundary(cfg, args.out, args.command)
            else:
                _cmd_calibrate(cfg, args.out, args.command)
    except (ValueError, RuntimeError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
