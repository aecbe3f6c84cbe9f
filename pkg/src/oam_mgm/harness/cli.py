"""Command-line entry point: ``oam-mgm {sweep,calibrate,tables,validate}``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..metrics import FEC_THRESHOLD, sensitivity_at_threshold
from ..rxdsp import CombinerMode
from ..xtalk import fiber_only_xt, table_1km, table_18km
from .config import ConfigError, emit_config, parse_config
from .sweep import SweepSpec, calibrate_spec, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("oam_mgm")


def _load(args) -> SweepSpec:
    spec = parse_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be non-negative")
        overrides["seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        if args.frames < 1:
            raise ConfigError("--frames", "must be >= 1")
        overrides["frames_per_point"] = args.frames
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(args.out)
    return replace(spec, **overrides) if overrides else spec


def _sensitivity_summary(report, spec: SweepSpec) -> str:
    lines = [f"sensitivity at BER {FEC_THRESHOLD:g} (dBm):"]
    for g in spec.scenario.groups:
        cells = []
        for c in spec.combiners:
            s = sensitivity_at_threshold(report.curve(g, c))
            cells.append(f"{c.value}={'n/a' if s is None else f'{s:.2f}'}")
        lines.append(f"  MG{g}: " + "  ".join(cells))
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    spec = _load(args)
    report = run_sweep(spec, jobs=args.jobs)
    written = report.write(spec.output_dir, spec)
    print(f"wrote {len(written)} files to {spec.output_dir}")
    print(_sensitivity_summary(report, spec))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    spec = _load(args)
    if spec.calibration is None:
        raise ConfigError("calibration", "no calibration target configured")
    kappa = calibrate_spec(spec, jobs=args.jobs)
    cal = spec.calibration
    print(f"kappa = {kappa:.6g}  (MG{cal.mg} {cal.combiner.value}, BER {cal.ber:g} at {cal.rop_dbm:g} dBm)")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = _load(args)
    sys.stdout.write(emit_config(spec))
    return EXIT_OK


def cmd_tables(args) -> int:
    for t in (table_1km(), table_18km()):
        if args.csv:
            print(f"# {t.label} ({t.system_length_km:g} km)")
            sys.stdout.write(t.to_csv())
            continue
        print(f"{t.label} ({t.system_length_km:g} km), source rows -> destination columns, dB")
        print("        " + "".join(f"{f'|l|={g}':>9}" for g in t.groups))
        for g, row in zip(t.groups, t.xt_db):
            print(f"{f'|l|={g}':>8}" + "".join(f"{v:>9.2f}" for v in row))
        print()
    if not args.csv:
        short, long = table_1km(), table_18km()
        delta = long.system_length_km - short.system_length_km
        print(f"fiber-only crosstalk over {delta:g} km (two-direction linear average):")
        for pair in ((2, 3), (3, 4), (2, 4)):
            over, per_km = fiber_only_xt(short, long, pair)
            print(f"  MGs {pair[0]}&{pair[1]}: {over:.2f} dB  ({per_km:.2f} dB/km)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oam-mgm", description="OAM mode-group diversity link simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p, runs: bool):
        p.add_argument("config", type=Path, help="YAML sweep configuration")
        p.add_argument("--seed", type=int, help="override the master seed")
        if runs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
            p.add_argument("--frames", type=int, help="override frames_per_point")
            p.add_argument("--out", type=Path, help="override output_dir")
        return p

    with_config(sub.add_parser("sweep", help="run a BER-vs-ROP sweep and write CSV reports"), True).set_defaults(func=cmd_sweep)
    with_config(sub.add_parser("calibrate", help="find the noise coefficient that hits the calibration target"),
                True).set_defaults(func=cmd_calibrate)
    with_config(sub.add_parser("validate", help="check a config and print its canonical form"), False).set_defaults(
        func=cmd_validate)
    t = sub.add_parser("tables", help="print the measured crosstalk tables")
    t.add_argument("--csv", action="store_true", help="emit CSV instead of an aligned table")
    t.set_defaults(func=cmd_tables)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every other failure maps to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
