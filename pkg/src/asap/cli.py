"""Command-line harness.

Exit codes: 0 success, 2 usage error, 3 scenario validation error,
4 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import NoFixedPoint, convergence_grid
from .config import AsapConfig
from .events import write_metrics
from .packager import PackagerParams, inflection_point, second_inflection_point
from .pipeline import RunResult, Scenario, ScenarioError, WorkloadExhausted, run
from .scenarios import (
    GRID_BETAS,
    GRID_BOUNDS,
    PRESETS,
    load_scenario,
    parse_scenario_text,
    preset_scenarios,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SCENARIO = 3
EXIT_RUNTIME = 4

log = logging.getLogger("asap")


def write_gamma_trace(result: RunResult, path: Path) -> None:
    tr = result.gamma_trace
    if tr is None:
        return
    with open(path, "w") as fh:
        fh.write("i,t_us,r_i,gamma_i,kept\n")
        for i, (t, r, g, k) in enumerate(
            zip(tr.t_us.tolist(), tr.rate.tolist(), tr.gamma.tolist(), tr.kept.tolist())
        ):
            fh.write(f"{i},{t},{r:.12g},{g:.12g},{int(k)}\n")


def format_summary(scenario: Scenario, result: RunResult) -> str:
    s = result.summary
    flushed = [m.k for m in result.metrics if m.flushed]
    lines = [
        f"scenario: {scenario.name}",
        f"policy: {scenario.policy.label}",
        f"seed: {scenario.seed}",
        f"events_in: {s.events_in}",
        f"events_dropped: {s.events_dropped}",
        f"events_packaged: {s.events_packaged}",
        f"events_flushed: {s.events_flushed}",
        f"events_processed: {s.events_processed}",
        f"conserved: {s.conserved}",
        f"packages: {s.packages}",
        f"mean_tau_s: {s.mean_tau:.12g}",
        f"max_tau_s: {s.max_tau:.12g}",
        f"max_queue_depth: {s.max_queue_depth}",
        f"flushed_k: {' '.join(map(str, flushed)) or '-'}",
    ]
    steady_k = [m.k for m in result.metrics if not m.flushed]
    for i, (d, nu) in enumerate(zip(s.disturbances, s.nu)):
        end = s.disturbances[i + 1] if i + 1 < len(s.disturbances) else len(steady_k)
        end_k = steady_k[end] if end < len(steady_k) else "end"
        lines.append(f"disturbance: k={steady_k[d]} until={end_k} nu={'undefined' if nu is None else nu}")
    return "\n".join(lines) + "\n"


def emit(scenario: Scenario, out_dir: Path, gamma_trace: bool, stem: str = "") -> RunResult:
    if gamma_trace and not scenario.record_gamma:
        scenario = replace(scenario, record_gamma=True)
    result = run(scenario)
    prefix = f"{stem}_" if stem else ""
    write_metrics(result.metrics, out_dir / f"{prefix}metrics.csv")
    if gamma_trace:
        write_gamma_trace(result, out_dir / f"{prefix}gamma_trace.csv")
    (out_dir / f"{prefix}summary.txt").write_text(format_summary(scenario, result))
    log.info("%s: %d packages, max tau %.3g s", scenario.name, result.summary.packages, result.summary.max_tau)
    return result


def write_grid(path: Path, clamp: bool = True) -> None:
    params = PackagerParams(**GRID_BOUNDS)
    rows = convergence_grid(params, GRID_BETAS, GRID_BETAS, clamp=clamp)
    with open(path, "w") as fh:
        fh.write("beta0,beta1,s_star\n")
        for b0, b1, s in rows:
            fh.write(f"{b0:g},{b1:g},{s:.12g}\n")


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    emit(scenario, _out_dir(args.out), args.gamma_trace or scenario.record_gamma)
    return EXIT_OK


def cmd_preset(args: argparse.Namespace) -> int:
    if args.name not in PRESETS:
        print(f"error: unknown preset {args.name!r}; choose from {', '.join(PRESETS)}", file=sys.stderr)
        return EXIT_USAGE
    out = _out_dir(args.out)
    seed = args.seed if args.seed is not None else 0
    if args.name == "convergence-grid":
        write_grid(out / "convergence_grid.csv")
        return EXIT_OK
    scenarios = preset_scenarios(args.name, seed)
    for sc in scenarios:
        stem = sc.name if len(scenarios) > 1 else ""
        emit(sc, out, args.gamma_trace or sc.record_gamma, stem=stem)
    return EXIT_OK


def cmd_converge(args: argparse.Namespace) -> int:
    if not args.grid:
        print("error: converge currently supports --grid only", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid(out, clamp=not args.unclamped)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    if args.config:
        values = parse_scenario_text(Path(args.config).read_text())
        cfg = AsapConfig.from_mapping({k: v for k, v in values.items() if k in AsapConfig.keys()})
    else:
        cfg = AsapConfig()
    p = cfg.packager_params()
    print(f"A = {p.A:.10g}")
    print(f"B = {p.B:.10g}")
    print(f"t_flex = {inflection_point(p.kappa):.10g}")
    print(f"t_flex_2 = {second_inflection_point(p.kappa):.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asap", description="Adaptive event packaging and filtering harness")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma-trace", action="store_true", help="also write the per-event filter trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a built-in experiment")
    p.add_argument("name", help=" | ".join(PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--gamma-trace", action="store_true")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("converge", help="fixed points of the size/cost loop for affine costs")
    p.add_argument("--grid", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--unclamped", action="store_true", help="do not clamp t into [t_min, t_max]")
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("calibrate", help="print A, B and inflection points")
    p.add_argument("--print", action="store_true", dest="do_print")
    p.add_argument("--config", help="file with AsapConfig keys")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ScenarioError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (WorkloadExhausted, NoFixedPoint, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
