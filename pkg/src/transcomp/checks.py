"""Reference expectations for benchmark records and a pass/fail checker.

Each check reports one of ``pass``, ``fail``, ``warn`` (soft expectation not
met, never fatal) or ``missing`` (the records do not cover the configuration).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bench import BenchRecord, fit_exponent, klogk_band

PASS, FAIL, WARN, MISSING = "pass", "fail", "warn", "missing"

REFERENCE_GAMMA = 1e-6

# Direction counts per (sweep kind, sweep value).  The loss values assume a
# host medium with relative permittivity 2 and a 0.5-wavelength box.
DIRECTION_COUNTS = {
    ("box_size", 0.25): 231,
    ("box_size", 0.5): 435,
    ("box_size", 1.0): 1035,
    ("accuracy", 3.0): 325,
    ("accuracy", 5.0): 435,
    ("accuracy", 6.0): 496,
    ("loss", 0.0): 703,
    ("loss", 0.0167): 703,
    ("loss", 0.0334): 861,
    ("loss", 0.1335): 1653,
}

# Ranks on the 32^3 grid (8 wavelengths, 0.5-wavelength boxes, 435 directions).
# Each entry maps a rank key, or a tuple of keys checked individually, to the
# expected value; "max" means the largest rank of the format.
REFERENCE_RANKS_N32 = {
    "tt3d": {"max": 28},
    "tucker3d": {"max": 29},
    "tt4d": {"r1": 27, "r2": 322, "r3": 225},
    "tucker4d": {("r1", "r2", "r3"): 28, "r4": 225},
    "htucker": {("r1", "r2", "r3"): 25, "r12": 327, "r34": 327, "r4": 225},
}

SAVING_ORDER = ("htucker", "tt4d", "tucker4d", "tucker3d", "tt3d")
OVERHEAD_ORDER = ("tucker3d", "htucker", "tt4d")

ORIGINAL_EXPONENT = (0.98, 1.02)
HTUCKER_EXPONENT = (0.45, 0.85)
KLOGK_FACTOR = 2.0


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    detail: str = ""


def rank_tolerance(expected: int) -> float:
    return max(0.1 * expected, 3.0)


def _gamma_of(r: BenchRecord) -> float:
    """Tolerance of a record: the sweep value for tolerance sweeps, else the reference."""
    return r.sweep_value if r.sweep_kind == "tolerance" else REFERENCE_GAMMA


def _suites(records: Iterable[BenchRecord]) -> dict:
    groups: dict = {}
    for r in records:
        value = None if np.isnan(r.sweep_value) else float(r.sweep_value)
        key = (r.sweep_kind, value, r.n1, r.N_dir)
        groups.setdefault(key, {})[r.method] = r
    return groups


def _check_directions(records) -> list:
    out = []
    for (kind, value), expected in DIRECTION_COUNTS.items():
        got = {r.N_dir for r in records if r.sweep_kind == kind and np.isclose(r.sweep_value, value)}
        name = f"directions {kind}={value:g}"
        if not got:
            out.append(Check(name, MISSING))
        elif got == {expected}:
            out.append(Check(name, PASS, f"N_dir={expected}"))
        else:
            out.append(Check(name, FAIL, f"expected {expected}, got {sorted(got)}"))
    return out


def _reference_n32(records) -> dict:
    found = {}
    for r in records:
        if (r.n1, r.n2, r.n3, r.N_dir) == (32, 32, 32, 435) and np.isclose(_gamma_of(r), REFERENCE_GAMMA):
            found.setdefault(r.method, r)
    return found


def _check_ranks(records) -> list:
    found = _reference_n32(records)
    out = []
    for method, spec in REFERENCE_RANKS_N32.items():
        rec = found.get(method)
        for keys, expected in spec.items():
            keys = keys if isinstance(keys, tuple) else (keys,)
            for key in keys:
                name = f"ranks n=32 {method} {key}"
                if rec is None:
                    out.append(Check(name, MISSING))
                    continue
                got = max(rec.ranks.values()) if key == "max" else rec.ranks.get(key)
                if got is None:
                    out.append(Check(name, FAIL, "rank not reported"))
                    continue
                tol = rank_tolerance(expected)
                ok = abs(got - expected) <= tol
                out.append(Check(name, PASS if ok else FAIL,
                                 f"got {got}, expected {expected} +/- {tol:g}"))
    return out


def _ordered(values: Sequence[float], descending: bool) -> bool:
    pairs = zip(values, values[1:])
    return all(a >= b for a, b in pairs) if descending else all(a <= b for a, b in pairs)


def _check_orderings(records) -> list:
    out = []
    for (kind, value, n, ndir), suite in sorted(_suites(records).items(), key=lambda kv: str(kv[0])):
        if not np.isclose(_gamma_of(next(iter(suite.values()))), REFERENCE_GAMMA):
            continue
        label = f"{kind}={'-' if value is None else f'{value:g}'} n={n} N_dir={ndir}"
        present = [m for m in SAVING_ORDER if m in suite]
        if len(present) >= 2:
            savings = [suite[m].saving_percent for m in present]
            ok = _ordered(savings, descending=True)
            detail = " >= ".join(f"{m} {s:.3f}" for m, s in zip(present, savings))
            out.append(Check(f"saving order {label}", PASS if ok else FAIL, detail))
        present = [m for m in OVERHEAD_ORDER if m in suite]
        if len(present) >= 2:
            ratios = [suite[m].overhead_ratio for m in present]
            ok = _ordered(ratios, descending=False)
            detail = " <= ".join(f"{m} {x:.3g}" for m, x in zip(present, ratios))
            out.append(Check(f"overhead order {label}", PASS if ok else WARN, detail))
    return out


def _trend(records, kind: str, name: str, increasing_in_value: bool, strict: bool = True) -> list:
    """Saving must move in one direction along a sweep, per method.

    With ``strict=False`` neighbouring points may tie, but the last point must
    still beat the first.
    """
    rel = [r for r in records if r.sweep_kind == kind]
    if not rel:
        return [Check(f"{name} trend", MISSING)]
    out = []
    for m in sorted({r.method for r in rel}):
        pts = sorted((r.sweep_value, r.saving_percent) for r in rel if r.method == m)
        if len(pts) < 2:
            out.append(Check(f"{name} trend {m}", MISSING, "fewer than two points"))
            continue
        s = [p[1] for p in pts]
        diffs = np.diff(s)
        if not increasing_in_value:
            diffs = -diffs
        ok = bool(np.all(diffs > 0)) if strict else bool(np.all(diffs >= 0) and diffs.sum() > 0)
        detail = ", ".join(f"{v:g}:{x:.4f}" for v, x in pts)
        out.append(Check(f"{name} trend {m}", PASS if ok else FAIL, detail))
    return out


def _check_trends(records) -> list:
    out = []
    # Larger gamma means a looser tolerance and a larger saving.
    out += _trend(records, "tolerance", "tolerance", increasing_in_value=True)
    # Larger boxes give a smaller saving.
    # Box size and loss only need a monotone trend; neighbouring media can tie.
    out += _trend(records, "box_size", "box size", increasing_in_value=False, strict=False)
    out += _trend(records, "loss", "loss", increasing_in_value=True, strict=False)
    return out


def _check_structure(records) -> list:
    rel = [r for r in records if r.sweep_kind == "structure_size"]
    if not rel:
        return [Check("structure scaling", MISSING)]
    out = []
    for m in sorted({r.method for r in rel}):
        rs = sorted((r for r in rel if r.method == m), key=lambda r: r.K)
        if len(rs) < 2:
            out.append(Check(f"structure scaling {m}", MISSING, "fewer than two sizes"))
            continue
        K = [r.K for r in rs]
        e = fit_exponent(K, [r.bytes_original for r in rs])
        lo, hi = ORIGINAL_EXPONENT
        out.append(Check(f"original memory exponent {m}", PASS if lo <= e <= hi else FAIL,
                         f"{e:.4f} in [{lo}, {hi}]"))
        if m == "htucker":
            e = fit_exponent(K, [r.bytes_compressed for r in rs])
            lo, hi = HTUCKER_EXPONENT
            out.append(Check("compressed memory exponent htucker",
                             PASS if lo <= e <= hi else FAIL, f"{e:.4f} in [{lo}, {hi}]"))
        if m == "tucker3d":
            band = klogk_band(K, [r.t_decompress_s for r in rs])
            out.append(Check("decompression time K log K tucker3d",
                             PASS if band <= KLOGK_FACTOR else FAIL,
                             f"max deviation factor {band:.3f} <= {KLOGK_FACTOR}"))
    return out


def verify_tables(records: Sequence[BenchRecord]) -> list:
    """All checks, in a stable order."""
    records = list(records)
    return (_check_directions(records) + _check_ranks(records) + _check_orderings(records)
            + _check_trends(records) + _check_structure(records))


def format_checks(checks: Sequence[Check]) -> str:
    width = max((len(c.name) for c in checks), default=10)
    lines = [f"{c.status.upper():8s} {c.name:{width}s}  {c.detail}".rstrip() for c in checks]
    counts = {s: sum(c.status == s for c in checks) for s in (PASS, FAIL, WARN, MISSING)}
    lines.append(" ".join(f"{k}={v}" for k, v in counts.items()))
    return "\n".join(lines)


def any_failed(checks: Sequence[Check]) -> bool:
    return any(c.status == FAIL for c in checks)
