"""Command-line front end: validate, run, compare, calibrate.

Exit codes: 0 success, 1 validation failure, 2 runtime error,
3 calibration tolerance unmet.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .augment import augment_model, save_preset
from .calibrate import (BudgetExhaustedWithoutImprovement, CalibrationTarget,
                        ParamBounds, calibrate_ai_params)
from .engine import ModelError, RunResult, RuntimeEvalError, SimConfig, integrate_run
from .parser import ModelSyntaxError, parse_model_text
from .scenarios import (BENCHMARK_YEARS, compare_runs, load_registry,
                        resolve_scenario, run_scenario)
from .svgchart import render_line_chart
from .world3 import CORPUS_SHA256, corpus_path, load_world3_corpus

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_TOLERANCE = 3

CHART_VARIABLES = ("persistent_pollution", "human_ecological_footprint")


def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="limits-sd",
        description="Deterministic system-dynamics runner for the World3-03 "
                    "corpus with an AI pollution pathway.")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress stdout chatter")
    parser.add_argument("--seed-corpus", default=None, metavar="FILE",
                        help="use an arbitrary model file instead of the bundled corpus")
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="parse and validate a model file")
    p_val.add_argument("model_path")

    p_run = sub.add_parser("run", help="run a named scenario and export CSV")
    p_run.add_argument("scenario")
    p_run.add_argument("--from", dest="t_start", type=float, default=1900.0)
    p_run.add_argument("--to", dest="t_end", type=float, default=2100.0)
    p_run.add_argument("--dt", type=float, default=0.5)

    p_cmp = sub.add_parser("compare", help="run two scenarios and compare")
    p_cmp.add_argument("base")
    p_cmp.add_argument("other")
    p_cmp.add_argument("--var", default="persistent_pollution")
    p_cmp.add_argument("--years", default=",".join(str(y) for y in BENCHMARK_YEARS),
                       help="comma-separated benchmark years")
    p_cmp.add_argument("--window", default=None,
                       help="overshoot window as START:END (e.g. 2020:2070)")

    p_cal = sub.add_parser("calibrate", help="fit AI parameters to delta targets")
    p_cal.add_argument("--targets", default=None,
                       help="targets file with 'year = pct' lines (default: built-in)")
    p_cal.add_argument("--budget", type=int, default=500)
    p_cal.add_argument("--tol", type=float, default=2.0,
                       help="max residual in percentage points for exit 0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    handler = {
        "validate": cmd_validate,
        "run": cmd_run,
        "compare": cmd_compare,
        "calibrate": cmd_calibrate,
    }[args.command]
    return handler(args, out_dir)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _load_spec(args):
    if args.seed_corpus:
        text = Path(args.seed_corpus).read_text(encoding="utf-8")
        return parse_model_text(text)
    return load_world3_corpus()


def cmd_validate(args, out_dir: Path) -> int:
    try:
        text = Path(args.model_path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        spec = parse_model_text(text)
    except ModelSyntaxError as exc:
        print(f"{args.model_path}:{exc.line}:{exc.col}: syntax error: {exc}",
              file=sys.stderr)
        return EXIT_VALIDATION
    except ModelError as exc:
        print(f"{args.model_path}: invalid model: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _say(args, f"ok: {len(spec.elements)} elements, model "
               f"{spec.name!r} version {spec.version}")
    return EXIT_OK


def _write_run_csv(run: RunResult, path: Path) -> list:
    names = sorted(run.series)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time," + ",".join(names) + "\n")
        for i, t in enumerate(run.times):
            row = [_fmt(t)] + [_fmt(run.series[n][i]) for n in names]
            fh.write(",".join(row) + "\n")
    return names


def _write_warnings(run: RunResult, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for time, element, kind, message in run.warnings:
            fh.write(f"{_fmt(time)}\t{element}\t{kind}\t{message}\n")


def _manifest(out_dir: Path, args, config: SimConfig, extra: dict) -> None:
    preset = Path(__file__).parent / "corpus" / "ai-params.preset"
    manifest = {
        "tool_version": __version__,
        "corpus_sha256": CORPUS_SHA256,
        "corpus_path": str(corpus_path()),
        "preset_sha256": hashlib.sha256(preset.read_bytes()).hexdigest()
        if preset.exists() else None,
        "config": {
            "t_start": config.t_start,
            "t_end": config.t_end,
            "dt": config.dt,
            "overrides": dict(config.overrides),
        },
        "seed_corpus": args.seed_corpus,
    }
    manifest.update(extra)
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args, out_dir: Path) -> int:
    config = SimConfig(t_start=args.t_start, t_end=args.t_end, dt=args.dt)
    try:
        spec = _load_spec(args)
        run = run_scenario(args.scenario, config, spec=spec)
    except ModelSyntaxError as exc:
        print(f"error: syntax: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RuntimeEvalError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    csv_path = out_dir / f"{args.scenario}.csv"
    _write_run_csv(run, csv_path)
    _write_warnings(run, out_dir / f"{args.scenario}.warnings.log")
    _manifest(out_dir, args, config, {"command": "run", "scenario": args.scenario,
                                      "samples": len(run.times)})
    _say(args, f"wrote {csv_path} ({len(run.times)} rows, "
               f"{len(run.warnings)} warnings)")
    return EXIT_OK


def cmd_compare(args, out_dir: Path) -> int:
    config = SimConfig()
    window = None
    if args.window:
        try:
            lo, hi = args.window.split(":")
            window = (float(lo), float(hi))
        except ValueError:
            print(f"error: bad --window {args.window!r}, expected START:END",
                  file=sys.stderr)
            return EXIT_RUNTIME
    try:
        years = [int(y) for y in args.years.split(",") if y.strip()]
    except ValueError:
        print(f"error: bad --years {args.years!r}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        spec = _load_spec(args)
        base = run_scenario(args.base, config, spec=spec)
        other = run_scenario(args.other, config, spec=spec)
        report = compare_runs(base, other, args.var, years,
                              overshoot_window=window)
    except RuntimeEvalError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    cmp_path = out_dir / f"compare_{args.base}_vs_{args.other}.csv"
    with open(cmp_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variable,year,base,other,pct_delta\n")
        for year, b, o, d in zip(report.benchmark_years, report.base_values,
                                 report.other_values, report.pct_delta):
            delta = "undefined" if d is None else _fmt(d)
            fh.write(f"{args.var},{year},{_fmt(b)},{_fmt(o)},{delta}\n")

    charts = []
    for var in CHART_VARIABLES:
        if var not in base.series:
            continue
        svg = render_line_chart(
            base.times,
            {args.base: base.series[var], args.other: other.series[var]},
            title=var.replace("_", " "), y_label=var)
        svg_path = out_dir / f"{var}.svg"
        svg_path.write_text(svg, encoding="utf-8", newline="\n")
        charts.append(svg_path.name)

    summary = [
        f"variable: {args.var}",
        f"peak {args.base}: {report.peak_base.peak_value!r} at "
        f"{report.peak_base.peak_time}",
        f"peak {args.other}: {report.peak_other.peak_value!r} at "
        f"{report.peak_other.peak_time}",
        f"residue delta 2100: "
        + ("undefined" if report.residue_delta_2100 is None
           else f"{report.residue_delta_2100:.2f}%"),
    ]
    if report.cumulative_overshoot_pct is not None:
        summary.append(f"cumulative overshoot {args.window}: "
                       f"{report.cumulative_overshoot_pct:.2f}%")
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    _manifest(out_dir, args, config,
              {"command": "compare", "base": args.base, "other": args.other,
               "variable": args.var, "charts": charts})
    _say(args, "\n".join(summary))
    _say(args, f"wrote {cmp_path}")
    return EXIT_OK


def _parse_targets_file(path: str) -> CalibrationTarget:
    years, pcts = [], []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"{path}:{lineno}: expected 'year = pct'")
        year, _, pct = line.partition("=")
        try:
            years.append(int(year.strip()))
            pcts.append(float(pct.strip()))
        except ValueError as exc:
            raise ModelError(f"{path}:{lineno}: bad number") from exc
    if not years:
        raise ModelError(f"{path}: no targets found")
    return CalibrationTarget(years=tuple(years), target_pct=tuple(pcts))


def cmd_calibrate(args, out_dir: Path) -> int:
    try:
        target = (_parse_targets_file(args.targets) if args.targets
                  else CalibrationTarget())
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    tolerance_met = False
    try:
        report = calibrate_ai_params(target, ParamBounds(), budget=args.budget)
    except BudgetExhaustedWithoutImprovement as exc:
        report = exc.report
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    else:
        tolerance_met = all(abs(r) <= args.tol for r in report.residuals)

    preset_path = out_dir / "ai-params.preset"
    header = (f"calibrated preset (tool {__version__})\n"
              f"corpus sha256 {report.corpus_checksum}\n"
              f"objective {report.objective!r} after {report.evaluations} evaluations")
    save_preset(report.params, preset_path, header=header)
    report_lines = report.summary_lines()
    if not tolerance_met:
        report_lines.append(f"TOLERANCE UNMET: max residual "
                            f"{report.max_abs_residual():.2f} pp > {args.tol} pp")
    (out_dir / "calibration-report.txt").write_text(
        "\n".join(report_lines) + "\n", encoding="utf-8")
    _say(args, "\n".join(report_lines))
    _say(args, f"wrote {preset_path}")
    return EXIT_OK if tolerance_met else EXIT_TOLERANCE
