"""Attention complexity benchmark: analytic FLOP models and timed kernels.

The timed kernels are forward-only numpy implementations. The grouped kernel
realizes its advantage by batching the per-group matmuls, so measured time
tracks the analytic count. FLOP units follow the multiply-accumulate
convention: one (a x b) @ (b x c) matmul costs a*b*c units.

The counter is an instrument, not a model: kernels route every matmul through
it, so counted work is the work actually executed. For the local-window
variant the analytic core count is the receptive-field cost, while the timed
realization is a dense masked matmul; the two are reported as modeled.
"""

from __future__ import annotations

import platform
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .attention import group_layout
from .errors import ConfigError, InputError

BENCH_VARIANTS = ("global", "group", "local")
CSV_HEADER = "variant,L,D,n,l,flops_core,median_seconds,reps"


class FlopCounter:
    """Tallies multiply-accumulate units of executed matmuls, by bucket."""

    def __init__(self):
        self.core = 0
        self.projection = 0

    def count(self, shape_a, shape_b, bucket: str) -> None:
        if len(shape_a) == 2:
            units = shape_a[0] * shape_a[1] * shape_b[1]
        else:
            batch = int(np.prod(shape_a[:-2]))
            units = batch * shape_a[-2] * shape_a[-1] * shape_b[-1]
        if bucket == "core":
            self.core += int(units)
        elif bucket == "projection":
            self.projection += int(units)
        else:
            raise ConfigError(f"unknown FLOP bucket {bucket!r}")


def _make_mm(counter: FlopCounter | None):
    if counter is None:
        return lambda a, b, bucket="core": np.matmul(a, b)

    def mm(a, b, bucket="core"):
        counter.count(a.shape, b.shape, bucket)
        return np.matmul(a, b)

    return mm


def _softmax_axis1(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class KernelWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    heads: int

    @staticmethod
    def create(dim: int, heads: int, rng: np.random.Generator) -> "KernelWeights":
        if dim % heads != 0:
            raise ConfigError(f"dim {dim} not divisible by {heads} heads")
        def w():
            return (rng.standard_normal((dim, dim)) / np.sqrt(dim)).astype(np.float32)
        return KernelWeights(wq=w(), wk=w(), wv=w(), wo=w(), heads=heads)


def _project(x, kw: KernelWeights, mm):
    return (mm(kw.wq, x, "projection"), mm(kw.wk, x, "projection"),
            mm(kw.wv, x, "projection"))


def global_attention_forward(x: np.ndarray, kw: KernelWeights,
                             counter: FlopCounter | None = None) -> np.ndarray:
    dim, length = x.shape
    d = dim // kw.heads
    mm = _make_mm(counter)
    q, k, v = _project(x, kw, mm)
    qh = q.reshape(kw.heads, d, length)
    kh = k.reshape(kw.heads, d, length)
    vh = v.reshape(kw.heads, d, length)
    scores = mm(qh.transpose(0, 2, 1), kh, "core")
    w = _softmax_axis1(scores / np.sqrt(d).astype(np.float32))
    out = mm(vh, w, "core")
    return mm(kw.wo, out.reshape(dim, length), "projection")


def group_attention_forward(x: np.ndarray, kw: KernelWeights, group_size: int,
                            offsets=None,
                            counter: FlopCounter | None = None) -> np.ndarray:
    """Grouped attention; full-size groups run as one batched matmul per head."""
    dim, length = x.shape
    d = dim // kw.heads
    if offsets is None:
        offsets = (0,) * kw.heads
    if len(offsets) != kw.heads:
        raise ConfigError(f"{len(offsets)} offsets for {kw.heads} heads")
    mm = _make_mm(counter)
    q, k, v = _project(x, kw, mm)
    qh = q.reshape(kw.heads, d, length)
    kh = k.reshape(kw.heads, d, length)
    vh = v.reshape(kw.heads, d, length)
    scale = np.sqrt(d).astype(np.float32)
    out = np.empty((kw.heads, d, length), dtype=x.dtype)
    for h in range(kw.heads):
        layout = group_layout(length, group_size, offsets[h])
        full = [(a, b) for a, b in layout.ranges if b - a == group_size]
        rest = [(a, b) for a, b in layout.ranges if b - a != group_size]
        if full:
            a0, b0 = full[0][0], full[-1][1]
            m = len(full)
            qg = qh[h, :, a0:b0].reshape(d, m, group_size).transpose(1, 0, 2)
            kg = kh[h, :, a0:b0].reshape(d, m, group_size).transpose(1, 0, 2)
            vg = vh[h, :, a0:b0].reshape(d, m, group_size).transpose(1, 0, 2)
            scores = mm(np.ascontiguousarray(qg.transpose(0, 2, 1)), kg, "core")
            w = _softmax_axis1(scores / scale)
            og = mm(vg, w, "core")
            out[h, :, a0:b0] = og.transpose(1, 0, 2).reshape(d, m * group_size)
        for a, b in rest:
            qg = qh[h, :, a:b]
            kg = kh[h, :, a:b]
            vg = vh[h, :, a:b]
            scores = mm(qg.T, kg, "core")
            # lift to the batched layout so the softmax axis matches
            w = _softmax_axis1((scores / scale)[None])[0]
            out[h, :, a:b] = mm(vg, w, "core")
    return mm(kw.wo, out.reshape(dim, length), "projection")


def local_attention_forward(x: np.ndarray, kw: KernelWeights, window: int,
                            counter: FlopCounter | None = None) -> np.ndarray:
    """Sliding-window attention timed as a dense masked matmul."""
    dim, length = x.shape
    d = dim // kw.heads
    mm = _make_mm(counter)
    q, k, v = _project(x, kw, mm)
    qh = q.reshape(kw.heads, d, length)
    kh = k.reshape(kw.heads, d, length)
    vh = v.reshape(kw.heads, d, length)
    pos = np.arange(length)
    blocked = np.abs(pos[:, None] - pos[None, :]) > window
    scores = mm(qh.transpose(0, 2, 1), kh, "core")
    scores = scores / np.sqrt(d).astype(np.float32)
    scores = np.where(blocked[None, :, :], np.float32(-1e9), scores)
    w = _softmax_axis1(scores)
    out = mm(vh, w, "core")
    return mm(kw.wo, out.reshape(dim, length), "projection")


# ---------------------------------------------------------------------------
# analytic models


@dataclass(frozen=True)
class FlopModel:
    variant: str
    length: int
    dim: int
    heads: int
    locality: int
    core: int
    projection: int


def flop_count(variant: str, length: int, dim: int, heads: int,
               group_size: int | None = None, offsets=None,
               window: int | None = None) -> FlopModel:
    """Analytic MAC counts for one attention forward.

    Core covers score and value matmuls; the four projections are reported
    separately and are identical across variants.
    """
    if variant not in BENCH_VARIANTS:
        raise ConfigError(f"unknown bench variant {variant!r}")
    if dim % heads != 0:
        raise ConfigError(f"dim {dim} not divisible by {heads} heads")
    d = dim // heads
    projection = 4 * dim * dim * length
    if variant == "global":
        core = 2 * length * length * dim
        locality = 0
    elif variant == "group":
        if group_size is None:
            raise ConfigError("group variant needs group_size")
        if offsets is None:
            offsets = (0,) * heads
        core = 0
        for o in offsets:
            layout = group_layout(length, group_size, o)
            core += sum(2 * (b - a) * (b - a) * d for a, b in layout.ranges)
        locality = group_size
    else:
        if window is None:
            raise ConfigError("local variant needs window")
        spans = (np.minimum(length - 1, np.arange(length) + window)
                 - np.maximum(0, np.arange(length) - window) + 1)
        core = int(2 * dim * spans.sum())
        locality = window
    return FlopModel(variant=variant, length=length, dim=dim, heads=heads,
                     locality=locality, core=int(core), projection=int(projection))


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class BenchReport:
    variant: str
    length: int
    dim: int
    heads: int
    locality: int
    flops_core: int
    median_seconds: float
    reps: int

    def to_csv_row(self) -> str:
        return (f"{self.variant},{self.length},{self.dim},{self.heads},"
                f"{self.locality},{self.flops_core},{self.median_seconds!r},{self.reps}")

    @staticmethod
    def from_csv_row(row: str) -> "BenchReport":
        parts = row.strip().split(",")
        if len(parts) != 8:
            raise InputError(f"bench row needs 8 fields, got {len(parts)}: {row!r}")
        try:
            return BenchReport(variant=parts[0], length=int(parts[1]), dim=int(parts[2]),
                               heads=int(parts[3]), locality=int(parts[4]),
                               flops_core=int(parts[5]), median_seconds=float(parts[6]),
                               reps=int(parts[7]))
        except ValueError as exc:
            raise InputError(f"bad bench row {row!r}: {exc}") from exc


def reports_to_csv(reports) -> str:
    return "\n".join([CSV_HEADER] + [r.to_csv_row() for r in reports]) + "\n"


def reports_from_csv(text: str) -> list[BenchReport]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise InputError(f"bench csv must start with header {CSV_HEADER!r}")
    return [BenchReport.from_csv_row(ln) for ln in lines[1:]]


def machine_note(threads: int | None) -> str:
    t = "uncontrolled" if threads is None else str(threads)
    return (f"python={platform.python_version()} numpy={np.__version__} "
            f"machine={platform.machine()} threads={t}")


def _thread_limit(threads: int | None):
    if threads is None:
        import contextlib
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=threads)
    except ImportError:
        import contextlib
        return contextlib.nullcontext()


def time_median(fn, reps: int = 9, warmup: int = 2) -> float:
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(statistics.median(times))


def run_benchmark(lengths, dim: int = 64, heads: int = 4, group_size: int = 10,
                  window: int | None = None, variants=BENCH_VARIANTS,
                  reps: int = 9, warmup: int = 2, seed: int = 0,
                  threads: int | None = 1) -> list[BenchReport]:
    """Time each variant at each length; group runs with zero offsets."""
    for v in variants:
        if v not in BENCH_VARIANTS:
            raise ConfigError(f"unknown bench variant {v!r}")
    if window is None:
        window = group_size
    rng = np.random.default_rng(seed)
    kw = KernelWeights.create(dim, heads, rng)
    reports = []
    with _thread_limit(threads):
        for length in lengths:
            x = rng.standard_normal((dim, length)).astype(np.float32)
            for variant in variants:
                if variant == "global":
                    fn = lambda: global_attention_forward(x, kw)
                    model = flop_count("global", length, dim, heads)
                elif variant == "group":
                    fn = lambda: group_attention_forward(x, kw, group_size)
                    model = flop_count("group", length, dim, heads, group_size=group_size)
                else:
                    fn = lambda: local_attention_forward(x, kw, window)
                    model = flop_count("local", length, dim, heads, window=window)
                median = time_median(fn, reps, warmup)
                reports.append(BenchReport(variant=variant, length=length, dim=dim,
                                           heads=heads, locality=model.locality,
                                           flops_core=model.core,
                                           median_seconds=median, reps=reps))
    return reports
