"""Command-line entry point: generate, compress, restore, sweep, verify-tables, report."""

from __future__ import annotations

import argparse
import json
import logging
import struct
import sys
from pathlib import Path

import numpy as np

from . import bench, checks, restorations
from .decompositions import load_formats, save_formats
from .fmm import MemoryCapExceeded, TranslationSuite
from .tensor_core import frobenius_relative_error, read_tensor, write_tensor

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_MEMCAP = 3

log = logging.getLogger("transcomp")

KIND_ALIASES = {
    "structure": "structure_size",
    "tolerance": "tolerance",
    "boxsize": "box_size",
    "accuracy": "accuracy",
    "loss": "loss",
    "single": "single",
}

# Desk-scale sweep axes; config files and flags override them.
KIND_DEFAULTS = {
    "structure_size": {"values": (8.0, 16.0, 32.0)},
    "tolerance": {"values": (1e-3, 1e-4, 1e-5, 1e-6)},
    "box_size": {"values": (1.0, 0.5, 0.25), "extent_lambda": 16.0},
    "accuracy": {"values": (3.0, 4.0, 5.0, 6.0)},
    "loss": {"values": (0.0, 0.0167, 0.0334, 0.1335), "eps_real": 2.0},
    "single": {},
}

# CLI flag name -> SweepConfig field.
_FLAG_FIELDS = {
    "extent_lambda": "extent_lambda",
    "box_edge_lambda": "box_edge_lambda",
    "digits": "digits",
    "gamma": "gamma",
    "methods": "methods",
    "eps_real": "eps_real",
    "sigma": "sigma",
    "freq_hz": "freq_hz",
    "seed": "seed",
    "reps": "reps",
    "values": "values",
    "timing": "timing",
}


def _csv_list(kind):
    def parse(text: str):
        return tuple(kind(x) for x in text.split(",") if x)
    return parse


def _add_physics_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("suite parameters")
    g.add_argument("--extent-lambda", type=float, help="cube edge of the structure, in wavelengths")
    g.add_argument("--box-edge-lambda", type=float, help="FMM box edge, in wavelengths")
    g.add_argument("--digits", type=float, help="FMM accuracy digits")
    g.add_argument("--eps-real", type=float, help="relative permittivity of the host medium")
    g.add_argument("--sigma", type=float, help="conductivity in S/m")
    g.add_argument("--freq-hz", type=float, help="frequency in Hz")
    g.add_argument("--mem-cap-gb", type=float, help="memory cap for stacked 4D tensors, GiB")
    g.add_argument("--config", type=Path, help="JSON file with SweepConfig fields")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transcomp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="dump the FFT'ed translation tensors of one suite")
    _add_physics_flags(p)
    p.add_argument("--layout", choices=("3d", "4d"), default="3d")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("compress", help="compress a dumped suite with one method")
    p.add_argument("input", type=Path)
    p.add_argument("--methods", type=_csv_list(str), required=True, help="exactly one method")
    p.add_argument("--gamma", type=float, default=1e-6)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("restore", help="restore every slice of a compressed file")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, help="write restored slices as a 3D dump sequence")
    p.add_argument("--verify", type=Path, metavar="SUITE",
                   help="compare against the original suite dump; exit 2 above 10*gamma")

    p = sub.add_parser("sweep", help="run a benchmark sweep and write a report")
    _add_physics_flags(p)
    p.add_argument("--kind", choices=tuple(KIND_ALIASES), required=True)
    p.add_argument("--values", type=_csv_list(float), help="comma-separated sweep values")
    p.add_argument("--methods", type=_csv_list(str))
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                   help="skip restoration and convolution timing (compression metrics only)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("verify-tables", help="check reports against reference expectations")
    p.add_argument("reports", type=Path, nargs="+")

    p = sub.add_parser("report", help="merge reports, convert format and print a summary")
    p.add_argument("reports", type=Path, nargs="+")
    p.add_argument("--out", type=Path)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def config_from_args(args: argparse.Namespace, kind: str = "single") -> bench.SweepConfig:
    """Kind defaults, then the JSON config file, then explicit flags."""
    d = dict(KIND_DEFAULTS[kind])
    if getattr(args, "config", None) is not None:
        d.update(json.loads(args.config.read_text()))
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            d[name] = value
    if getattr(args, "mem_cap_gb", None) is not None:
        d["memory_cap_bytes"] = int(args.mem_cap_gb * 2**30)
    d["sweep_kind"] = kind
    return bench.SweepConfig.from_dict(d)


def _suite_from_config(cfg: bench.SweepConfig) -> TranslationSuite:
    grid, medium, digits, _ = cfg.point(None)
    return TranslationSuite(grid, medium, digits)


def _write_slices(path: Path, slices, count: int) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", count))
        for t in slices:
            write_tensor(fh, t)


def read_suite(path: Path) -> list:
    """Slices of a suite dump: a single 4D tensor or a counted sequence of 3D tensors."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        fh.seek(0)
        if head == b"TTOP":
            t = read_tensor(fh)
            if t.ndim != 4:
                raise ValueError(f"expected a 4D suite tensor, got {t.ndim} modes")
            return [t[..., p] for p in range(t.shape[3])]
        (count,) = struct.unpack("<I", fh.read(4))
        return [read_tensor(fh) for _ in range(count)]


def cmd_generate(args) -> int:
    cfg = config_from_args(args)
    suite = _suite_from_config(cfg)
    log.info("suite %s with %d directions (L=%d)", suite.slice_shape, suite.n_dir, suite.L)
    if args.layout == "4d":
        with open(args.out, "wb") as fh:
            write_tensor(fh, suite.stacked(cfg.memory_cap_bytes))
    else:
        _write_slices(args.out, suite.slices(), suite.n_dir)
    print(f"wrote {suite.n_dir} directions of {suite.slice_shape} to {args.out}")
    return EXIT_OK


def cmd_compress(args) -> int:
    if len(args.methods) != 1 or args.methods[0] not in bench.METHODS:
        raise SystemExit(f"compress takes exactly one of {', '.join(bench.METHODS)}")
    method = args.methods[0]
    decompose = bench.DECOMPOSERS[method]
    slices = read_suite(args.input)
    if method in bench.METHODS_3D:
        formats = [decompose(t, args.gamma) for t in slices]
    else:
        formats = [decompose(np.stack(slices, axis=3), args.gamma)]
    save_formats(args.out, formats)
    print(f"{method}: {len(slices)} directions compressed into {args.out}")
    return EXIT_OK


def _restored(formats):
    if len(formats) == 1 and len(formats[0].shape) == 4:
        f = formats[0]
        ws = restorations.RestorationWorkspace()
        for p in range(f.shape[3]):
            yield f.gamma, restorations.restore_slice(f, p, ws)
    else:
        for f in formats:
            yield f.gamma, restorations.restore_slice(f)


def cmd_restore(args) -> int:
    formats = load_formats(args.input)
    originals = read_suite(args.verify) if args.verify else None
    restored = []
    worst, gamma = 0.0, formats[0].gamma
    for p, (gamma, t) in enumerate(_restored(formats)):
        if originals is not None:
            worst = max(worst, frobenius_relative_error(originals[p], t))
        if args.out:
            restored.append(t)
    if args.out:
        _write_slices(args.out, restored, len(restored))
    if originals is not None:
        ok = worst <= 10 * gamma
        print(f"max slice relative error {worst:.3e} ({'ok' if ok else 'exceeds'} 10*gamma={10 * gamma:g})")
        return EXIT_OK if ok else EXIT_VERIFY
    return EXIT_OK


def cmd_sweep(args) -> int:
    kind = KIND_ALIASES[args.kind]
    cfg = config_from_args(args, kind)
    result = bench.run_sweep(cfg)
    for method, value, why in result.skipped:
        print(f"skipped {method} at {kind}={value}: {why}", file=sys.stderr)
    if not result.records:
        return EXIT_MEMCAP
    bench.emit_report(result.records, args.format, args.out)
    for method, exps in result.exponents.items():
        print(method, " ".join(f"{k}={v:.3f}" for k, v in exps.items()))
    print(f"wrote {len(result.records)} records to {args.out}")
    bad = [r for r in result.records if "error_exceeds_10gamma" in r.flags]
    return EXIT_VERIFY if bad else EXIT_OK


def _load_reports(paths) -> list:
    records = []
    for path in paths:
        records.extend(bench.read_report(path))
    return records


def cmd_verify_tables(args) -> int:
    found = checks.verify_tables(_load_reports(args.reports))
    print(checks.format_checks(found))
    return EXIT_VERIFY if checks.any_failed(found) else EXIT_OK


def cmd_report(args) -> int:
    records = _load_reports(args.reports)
    for r in records:
        print(f"{r.method:9s} {r.sweep_kind}={r.sweep_value:<8g} K={r.K:<7d} N_dir={r.N_dir:<5d} "
              f"saving={r.saving_percent:8.3f}% overhead={r.overhead_ratio:.3g} "
              f"ranks={r.rank_summary}")
    if args.out:
        bench.emit_report(records, args.format, args.out)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "compress": cmd_compress,
    "restore": cmd_restore,
    "sweep": cmd_sweep,
    "verify-tables": cmd_verify_tables,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MemoryCapExceeded as exc:
        print(f"memory cap refused: {exc}", file=sys.stderr)
        return EXIT_MEMCAP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
