"""Sweep harness: compress translation suites, time restoration against convolution, report."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import restorations
from .decompositions import (
    TTFormat,
    compressed_memory,
    htucker_decompose,
    htucker_from_tucker,
    tt_decompose,
    tucker_decompose,
)
from .fmm import GridSpec, MediumParams, MemoryCapExceeded, TranslationSuite, convolve
from .tensor_core import frobenius_relative_error

log = logging.getLogger(__name__)

METHODS_3D = ("tt3d", "tucker3d")
METHODS_4D = ("tt4d", "tucker4d", "htucker")
METHODS = METHODS_3D + METHODS_4D
SWEEP_KINDS = ("structure_size", "tolerance", "box_size", "accuracy", "loss", "single")

DECOMPOSERS = {
    "tt3d": tt_decompose,
    "tucker3d": tucker_decompose,
    "tt4d": tt_decompose,
    "tucker4d": tucker_decompose,
    "htucker": htucker_decompose,
}

TIMING_SPREAD_LIMIT = 0.20


@dataclass
class SweepConfig:
    sweep_kind: str = "single"
    methods: tuple = METHODS
    extent_lambda: float = 8.0
    box_edge_lambda: float = 0.5
    digits: float = 5
    gamma: float = 1e-6
    eps_real: float = 1.0
    sigma: float = 0.0
    freq_hz: float = 3e8
    near_kappa: float = 4.0
    values: tuple = ()
    memory_cap_bytes: int = 4 * 2**30
    seed: int = 0
    reps: int = 3
    timing: bool = True

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.values = tuple(self.values)
        if self.sweep_kind not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep kind {self.sweep_kind!r}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.reps < 3:
            raise ValueError("at least 3 timing repetitions are required")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def point(self, value=None) -> tuple:
        """(grid, medium, digits, gamma) for one sweep value."""
        extent, box, digits = self.extent_lambda, self.box_edge_lambda, self.digits
        gamma, sigma = self.gamma, self.sigma
        if value is not None:
            if self.sweep_kind == "structure_size":
                extent = float(value)
            elif self.sweep_kind == "tolerance":
                gamma = float(value)
            elif self.sweep_kind == "box_size":
                box = float(value)
            elif self.sweep_kind == "accuracy":
                digits = float(value)
            elif self.sweep_kind == "loss":
                sigma = float(value)
        medium = MediumParams(self.freq_hz, self.eps_real, sigma)
        lam = medium.wavelength
        grid = GridSpec.cube(extent * lam, box * lam, self.near_kappa)
        return grid, medium, digits, gamma


@dataclass
class BenchRecord:
    method: str
    sweep_kind: str
    sweep_value: float
    K: int
    N_dir: int
    n1: int
    n2: int
    n3: int
    n4: int
    bytes_original: int
    bytes_compressed: int
    saving_percent: float
    t_decompress_s: float
    t_convolve_s: float
    overhead_ratio: float
    ranks: dict
    max_slice_rel_error: float
    flags: list = field(default_factory=list)

    @property
    def rank_summary(self) -> str:
        return ";".join(f"{k}:{v}" for k, v in self.ranks.items())


@dataclass
class SweepResult:
    records: list
    exponents: dict
    skipped: list


# -- timing ------------------------------------------------------------------

_timed = {"active": False}


def in_timed_region() -> bool:
    return _timed["active"]


@contextlib.contextmanager
def _timed_region():
    _timed["active"] = True
    try:
        yield
    finally:
        _timed["active"] = False


class SuiteTimer:
    """Accumulates per-direction timings into whole-suite totals.

    Each call is run once untimed as warm-up, then ``reps`` times; the suite
    time is the sum over directions of the per-direction best, and the spread
    is taken across the per-repetition suite totals.  A disabled timer skips
    the calls entirely and reports NaN.
    """

    def __init__(self, reps: int, enabled: bool = True):
        self.reps = reps
        self.enabled = enabled
        self.best = 0.0 if enabled else float("nan")
        self.totals = np.zeros(reps)

    def time(self, fn: Callable[[], object]) -> None:
        if not self.enabled:
            return
        with threadpool_limits(limits=1):
            fn()
            times = np.empty(self.reps)
            for i in range(self.reps):
                with _timed_region():
                    t0 = time.perf_counter()
                    fn()
                    times[i] = time.perf_counter() - t0
        self.best += times.min()
        self.totals += times

    @property
    def noisy(self) -> bool:
        lo = self.totals.min()
        return lo > 0 and (self.totals.max() - lo) / lo > TIMING_SPREAD_LIMIT


def input_field(shape: tuple, seed: int) -> np.ndarray:
    """Zero-padded random spatial field: nonzero only on the first K entries per axis."""
    rng = np.random.default_rng(seed)
    a = np.zeros(shape, dtype=np.complex128)
    k = tuple(s // 2 for s in shape)
    a[: k[0], : k[1], : k[2]] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return a


# -- one sweep point ---------------------------------------------------------

def _slice_error(original: np.ndarray, restored: np.ndarray) -> float:
    assert not in_timed_region(), "verification must run outside the timed region"
    return frobenius_relative_error(original, restored)


def _rank_dict(method: str, ranks: Sequence[int]) -> dict:
    if method == "htucker":
        keys = ("r1", "r2", "r3", "r4", "r12", "r34")
    else:
        keys = tuple(f"r{i + 1}" for i in range(len(ranks)))
    return {k: int(r) for k, r in zip(keys, ranks)}


@dataclass
class _MethodTally:
    timer: SuiteTimer
    compressed: int = 0
    err: float = 0.0
    ranks: Optional[np.ndarray] = None

    def add_ranks(self, r) -> None:
        r = np.asarray(r)
        self.ranks = r if self.ranks is None else np.maximum(self.ranks, r)


def run_methods(cfg: SweepConfig, methods: Sequence[str], value=None) -> tuple:
    """Run several methods on one shared suite.

    3D methods stream over directions (generate, compress, verify, time,
    discard); 4D methods work on the stacked tensor, which must fit under the
    memory cap.  Returns ``(records, skipped)`` where ``skipped`` lists
    ``(method, reason)`` for 4D methods refused by the cap.
    """
    grid, medium, digits, gamma = cfg.point(value)
    suite = TranslationSuite(grid, medium, digits)
    shape = suite.slice_shape
    n_dir = suite.n_dir
    a = input_field(shape, cfg.seed)
    log.info("point %s=%s: grid %s, L=%d, N_dir=%d", cfg.sweep_kind, value, shape, suite.L, n_dir)

    conv = SuiteTimer(cfg.reps, cfg.timing)
    tallies = {}
    skipped = []
    m3 = [m for m in methods if m in METHODS_3D]
    m4 = [m for m in methods if m in METHODS_4D]
    stack = None
    if m4:
        try:
            stack = suite.stacked(cfg.memory_cap_bytes)
        except MemoryCapExceeded as exc:
            if not m3:
                raise
            log.warning("skipping 4D methods at %s=%s: %s", cfg.sweep_kind, value, exc)
            skipped.extend((m, str(exc)) for m in m4)
            m4 = []

    for m in m3:
        tallies[m] = _MethodTally(SuiteTimer(cfg.reps, cfg.timing))
    for p in range(n_dir):
        t = stack[..., p] if stack is not None else suite.slice(p)
        conv.time(lambda: convolve(t, a))
        for m in m3:
            f = DECOMPOSERS[m](t, gamma)
            tally = tallies[m]
            tally.timer.time(lambda: restorations.restore_slice(f))
            tally.err = max(tally.err, _slice_error(t, restorations.restore_slice(f)))
            tally.compressed += compressed_memory(f)
            tally.add_ranks(f.ranks)

    tucker4d = None
    for m in m4:
        if m == "htucker":
            if tucker4d is None:
                tucker4d = tucker_decompose(stack, gamma)
            f = htucker_from_tucker(tucker4d)
        else:
            f = DECOMPOSERS[m](stack, gamma)
            if m == "tucker4d":
                tucker4d = f
        tally = tallies[m] = _MethodTally(SuiteTimer(cfg.reps, cfg.timing))
        ws = restorations.RestorationWorkspace()
        if isinstance(f, TTFormat):
            ws.bind(f)
        for p in range(n_dir):
            tally.timer.time(lambda: restorations.restore_slice(f, p, ws))
            tally.err = max(tally.err, _slice_error(stack[..., p], restorations.restore_slice(f, p, ws)))
        tally.compressed = compressed_memory(f)
        tally.add_ranks(f.ranks)
        del f
    del stack, tucker4d

    records = []
    for m in methods:
        if m not in tallies:
            continue
        tally = tallies[m]
        flags = []
        if conv.noisy or tally.timer.noisy:
            flags.append("timing_variance")
        if tally.err > 10 * gamma:
            flags.append("error_exceeds_10gamma")
        t_dec = tally.timer.best
        records.append(BenchRecord(
            method=m,
            sweep_kind=cfg.sweep_kind,
            sweep_value=float(value) if value is not None else float("nan"),
            K=grid.num_boxes,
            N_dir=n_dir,
            n1=shape[0], n2=shape[1], n3=shape[2], n4=n_dir,
            bytes_original=suite.bytes_original,
            bytes_compressed=int(tally.compressed),
            saving_percent=100.0 * (1.0 - tally.compressed / suite.bytes_original),
            t_decompress_s=t_dec,
            t_convolve_s=conv.best,
            overhead_ratio=t_dec / conv.best,
            ranks=_rank_dict(m, tally.ranks),
            max_slice_rel_error=float(tally.err),
            flags=flags,
        ))
    return records, skipped


def run_point(cfg: SweepConfig, method: str, value=None) -> BenchRecord:
    records, _ = run_methods(cfg, [method], value)
    return records[0]


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    if len(x) < 2:
        raise ValueError("need at least two points to fit an exponent")
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


def klogk_band(K: Sequence[float], t: Sequence[float]) -> float:
    """Largest factor by which ``t`` departs from the best fit ``c K log K``."""
    K = np.asarray(K, float)
    t = np.asarray(t, float)
    model = K * np.log(K)
    c = np.exp(np.mean(np.log(t) - np.log(model)))
    ratio = t / (c * model)
    return float(np.max(np.maximum(ratio, 1.0 / ratio)))


def run_sweep(cfg: SweepConfig, values: Optional[Sequence] = None) -> SweepResult:
    """Run every configured method at each sweep value.

    4D methods whose stacked tensor would exceed the memory cap are skipped
    for that value (listed in ``skipped``) while 3D methods still run.  For
    structure-size sweeps, log-log slopes against K are fitted per method
    from whatever points are available (two or more).
    """
    values = tuple(values if values is not None else cfg.values) or (None,)
    records = []
    skipped = []
    for v in values:
        try:
            recs, skip = run_methods(cfg, cfg.methods, v)
        except MemoryCapExceeded as exc:
            log.warning("skipping %s=%s: %s", cfg.sweep_kind, v, exc)
            skipped.extend((m, v, str(exc)) for m in cfg.methods)
            continue
        records.extend(recs)
        skipped.extend((m, v, why) for m, why in skip)
    exponents = {}
    if cfg.sweep_kind == "structure_size":
        for m in cfg.methods:
            rs = sorted((r for r in records if r.method == m), key=lambda r: r.K)
            if len(rs) < 2:
                continue
            K = [r.K for r in rs]
            exponents[m] = {
                "original_bytes": fit_exponent(K, [r.bytes_original for r in rs]),
                "compressed_bytes": fit_exponent(K, [r.bytes_compressed for r in rs]),
                "decompress_time": fit_exponent(K, [r.t_decompress_s for r in rs]),
            }
    return SweepResult(records, exponents, skipped)


# -- reports -----------------------------------------------------------------

CSV_COLUMNS = ("method", "sweep_kind", "sweep_value", "K", "N_dir", "n1", "n2", "n3", "n4",
               "bytes_original", "bytes_compressed", "saving_percent", "t_decompress_s",
               "t_convolve_s", "overhead_ratio", "rank_summary", "max_slice_rel_error", "flags")
_INT_FIELDS = {"K", "N_dir", "n1", "n2", "n3", "n4", "bytes_original", "bytes_compressed"}
_FLOAT_FIELDS = {"sweep_value", "saving_percent", "t_decompress_s", "t_convolve_s",
                 "overhead_ratio", "max_slice_rel_error"}


def _g6(x: float) -> str:
    return f"{x:.6g}"


def _row(r: BenchRecord) -> dict:
    row = {}
    for col in CSV_COLUMNS:
        if col == "rank_summary":
            row[col] = r.rank_summary
        elif col == "flags":
            row[col] = "|".join(r.flags)
        elif col in _FLOAT_FIELDS:
            row[col] = _g6(getattr(r, col))
        else:
            row[col] = getattr(r, col)
    return row


def emit_report(records: Sequence[BenchRecord], fmt: str, path) -> Path:
    if not records:
        raise ValueError("no records to report")
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for r in records:
                w.writerow(_row(r))
    elif fmt == "json":
        out = []
        for r in records:
            d = asdict(r)
            for k in _FLOAT_FIELDS:
                d[k] = float(_g6(d[k]))
            out.append(d)
        path.write_text(json.dumps(out, indent=1))
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _parse_ranks(s: str) -> dict:
    if not s:
        return {}
    return {k: int(v) for k, v in (item.split(":") for item in s.split(";"))}


def read_report(path) -> list:
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith("["):
        return [BenchRecord(**d) for d in json.loads(text)]
    records = []
    for row in csv.DictReader(text.splitlines()):
        kw = {}
        for col, val in row.items():
            if col == "rank_summary":
                kw["ranks"] = _parse_ranks(val)
            elif col == "flags":
                kw["flags"] = [f for f in val.split("|") if f]
            elif col in _INT_FIELDS:
                kw[col] = int(val)
            elif col in _FLOAT_FIELDS:
                kw[col] = float(val)
            else:
                kw[col] = val
        records.append(BenchRecord(**kw))
    return records
