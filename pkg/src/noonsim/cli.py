"""Command-line front end.

Each scenario subcommand writes ``<scenario>.csv`` and a plain-text
``<scenario>.manifest.txt`` into ``--out``. The CSV starts with ``#`` comment
lines repeating the manifest, then ``setting,expected_rate,counts,stderr,fit_curve``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import DETECTOR_SETS, STAGES, ConfigError, ExperimentConfig, parse_config
from .fitting import FitError
from .scenarios import ScenarioError, classify_source, run_fock_peak_scan, run_hom_scan, run_phase_fringe
from .selftest import run_selftest

CSV_HEADER = "setting,expected_rate,counts,stderr,fit_curve"


def _num(x) -> str:
    return format(float(x), ".9g")


def manifest_lines(scenario: str, config: ExperimentConfig, outputs) -> list:
    lines = [f"scenario = {scenario}", f"tool_version = {__version__}", f"seed = {config.seed}"]
    lines += [f"output = {name}" for name in outputs]
    lines += [f"config.{k} = {v}" for k, v in config.items()]
    return lines


def render_csv(result, manifest: list, noiseless: bool = False) -> str:
    scan = result.scan
    if result.fit is None:
        curve = np.full(len(scan), np.nan)
    else:
        curve = result.fit.predict(scan.settings)
        if noiseless:
            # noiseless fits see expected counts; report the curve as a rate
            curve = curve / scan.trials
    rows = ["# " + line for line in manifest] + [CSV_HEADER]
    for (s, e, c, err), f in zip(scan.points, curve):
        rows.append(",".join((_num(s), _num(e), str(int(c)), _num(err), _num(f))))
    return "\n".join(rows) + "\n"


def _write_outputs(out_dir: Path, files: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, text in files.items():
            tmp = out_dir / (name + ".part")
            tmp.write_text(text)
            os.replace(tmp, out_dir / name)
            written.append(out_dir / name)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        for name in files:
            (out_dir / (name + ".part")).unlink(missing_ok=True)
        raise


def _emit(result, config: ExperimentConfig, out_dir: Path, scenario: str):
    csv_name, man_name = f"{scenario}.csv", f"{scenario}.manifest.txt"
    manifest = manifest_lines(scenario, config, [csv_name, man_name])
    _write_outputs(out_dir, {csv_name: render_csv(result, manifest, config.noiseless), man_name: "\n".join(manifest) + "\n"})
    return out_dir / csv_name


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--out", type=Path, default=Path("noonsim-out"), help="output directory")
    parser.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a configuration key; repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noonsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"noonsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("hom", help="HOM dip versus source delay"))
    _common(sub.add_parser("fock-peak", help="two-photon peak behind BS2 with path N blocked"))
    p = sub.add_parser("fringe", help="phase fringe for one source, stage and detector pair")
    _common(p)
    p.add_argument("--source", choices=("single", "noon", "coherent"))
    p.add_argument("--stage", choices=STAGES)
    p.add_argument("--detectors", choices=DETECTOR_SETS)
    p = sub.add_parser("discriminate", help="classify the input from its D3/D4 fringe")
    _common(p)
    p.add_argument("--source", choices=("noon", "coherent"))
    p.add_argument("--stage", choices=STAGES)
    sub.add_parser("selftest", help="run the built-in consistency checks")
    return parser


def _config_from(args) -> ExperimentConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("seed", "source", "stage", "detectors"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if args.command == "discriminate":
        overrides["detectors"] = "d3d4"
    return parse_config(args.config, overrides)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return 0 if run_selftest() else 1
    try:
        config = _config_from(args)
    except ConfigError as exc:
        print(f"noonsim: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "hom":
            result = run_hom_scan(config)
            scenario = "hom"
            summary = f"V0 = {result.visibility:.4f} +/- {result.visibility_stderr:.4f}"
        elif args.command == "fock-peak":
            result = run_fock_peak_scan(config)
            scenario = "fock-peak"
            summary = f"g2_max = {result.metrics['g2_max']:.4f}"
        else:
            result = run_phase_fringe(config)
            scenario = result.scenario
            summary = f"V1 = {result.visibility:.4f} +/- {result.visibility_stderr:.4f}"
            if args.command == "discriminate":
                verdict = classify_source(result.scan, use_expected=config.noiseless)
                scenario = f"discriminate-{config.source}-{config.stage}"
                summary = f"classification: {verdict.label} (residual ratio {verdict.residual_ratio:.3g})"
        path = _emit(result, config, args.out, scenario)
    except (ScenarioError, FitError, ValueError, OSError) as exc:
        print(f"noonsim: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    print(summary)
    print(f"wrote {path}")
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
