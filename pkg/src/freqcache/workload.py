"""Id-stream generation and ingestion: the workloads that drive the cache.

Synthetic traces draw ids i.i.d. from a (optionally shifted) power law over a
seeded random permutation of the id space, so the hot ids are not the
numerically smallest and the frequency reorder map is never a trivial
identity. Presets calibrate the law so the head of the distribution carries a
target share of all accesses, matching the skew of real click logs. Real
datasets come in through a CSV loader that remaps per-feature categorical
values into one contiguous global id space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

# Draws generated per chunk; fixed so traces are bitwise reproducible
# regardless of available memory.
_GEN_CHUNK = 1 << 24

# Guide-table resolution for large draws: cell k covers u in [k/M, (k+1)/M).
# When a cell holds no CDF boundary the rank is read straight out of the
# table; only boundary cells fall back to binary search. Identical output to
# a plain searchsorted, several times faster for skewed laws.
_GUIDE_CELLS = 1 << 20
_GUIDE_MIN_DRAWS = 1 << 22


@dataclass
class Trace:
    """An ordered stream of samples, each holding one id per sparse feature.

    ``table_sizes`` carries per-feature cardinalities when ids live in
    per-feature offset ranges (CSV ingestion); generated traces draw from one
    undivided space and leave it None.
    """

    num_ids: int
    features: int
    samples: np.ndarray
    provenance: dict = field(default_factory=dict)
    table_sizes: list | None = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or self.samples.shape[1] != self.features:
            raise ValueError(
                f"samples must be (n, features={self.features}), got {self.samples.shape}"
            )
        if self.samples.size:
            lo, hi = int(self.samples.min()), int(self.samples.max())
            if lo < 0 or hi >= self.num_ids:
                raise ValueError(f"trace ids must lie in [0, {self.num_ids}), found [{lo}, {hi}]")

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])


@dataclass
class Batch:
    """One iteration's input ids, flattened across features, duplicates kept."""

    seq: int
    ids: np.ndarray


def zipf_pmf(num_ids: int, exponent: float, shift: float = 0.0) -> np.ndarray:
    """Probability of each frequency rank under the (shifted) power law.

    p(r) proportional to (r + 1 + shift)^-exponent for ranks 0..num_ids-1.
    shift=0 is the classic Zipf law; shift>0 flattens the head while keeping
    a power-law body (Zipf-Mandelbrot). Computed in log space so very large
    exponents do not underflow to an all-zero vector.
    """
    if num_ids < 1:
        raise ValueError("num_ids must be >= 1")
    if exponent <= 0:
        raise ValueError(f"exponent must be > 0, got {exponent}")
    if shift < 0:
        raise ValueError(f"shift must be >= 0, got {shift}")
    logw = -exponent * np.log(np.arange(1, num_ids + 1, dtype=np.float64) + shift)
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def expected_head_coverage(
    num_ids: int, exponent: float, top_fraction: float, shift: float = 0.0
) -> float:
    """Analytic share of accesses hitting the top ceil(f * num_ids) ranks."""
    k = math.ceil(top_fraction * num_ids)
    if k <= 0:
        return 0.0
    return float(zipf_pmf(num_ids, exponent, shift)[:k].sum())


def calibrate_exponent(
    num_ids: int,
    top_fraction: float,
    target_coverage: float,
    shift: float = 0.0,
    lo: float = 1e-3,
    hi: float = 64.0,
    iterations: int = 60,
) -> float:
    """Bisect the exponent until the analytic head coverage meets the target.

    Coverage is strictly increasing in the exponent, so plain bisection on
    the closed-form expectation converges; the empirical coverage of a
    generated trace then lands on the target up to sampling noise.
    """
    if not (0.0 < target_coverage < 1.0):
        raise ValueError("target_coverage must be in (0, 1)")
    cov_lo = expected_head_coverage(num_ids, lo, top_fraction, shift)
    cov_hi = expected_head_coverage(num_ids, hi, top_fraction, shift)
    if not (cov_lo <= target_coverage <= cov_hi):
        raise ValueError(
            f"target {target_coverage} unreachable in exponent bracket "
            f"[{lo}, {hi}] (coverage range [{cov_lo:.4f}, {cov_hi:.4f}])"
        )
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if expected_head_coverage(num_ids, mid, top_fraction, shift) < target_coverage:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gen_zipf(
    num_ids: int,
    exponent: float,
    num_samples: int,
    features: int,
    seed: int,
    shift: float = 0.0,
) -> Trace:
    """Draw num_samples x features ids i.i.d. from the skewed law.

    Ranks are mapped through a seeded permutation of [0, num_ids) so id value
    carries no frequency information. Fully determined by the arguments.
    """
    if num_samples < 0 or features < 1:
        raise ValueError("num_samples must be >= 0 and features >= 1")
    pmf = zipf_pmf(num_ids, exponent, shift)  # validates num_ids/exponent/shift
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    ss = np.random.SeedSequence(seed)
    perm_ss, draw_ss = ss.spawn(2)
    perm = np.random.default_rng(perm_ss).permutation(num_ids)
    dtype = np.int32 if num_ids <= np.iinfo(np.int32).max else np.int64
    perm = perm.astype(dtype)

    total = num_samples * features
    out = np.empty(total, dtype=dtype)
    rng = np.random.default_rng(draw_ss)
    guide = None
    if total >= _GUIDE_MIN_DRAWS:
        cells = np.arange(_GUIDE_CELLS + 1, dtype=np.float64) / _GUIDE_CELLS
        guide = np.searchsorted(cdf, cells, side="right").astype(np.int32)
        guide_hi = guide[1:]
    for start in range(0, total, _GEN_CHUNK):
        stop = min(start + _GEN_CHUNK, total)
        u = rng.random(stop - start)
        if guide is None:
            ranks = np.searchsorted(cdf, u, side="right")
        else:
            cell = (u * _GUIDE_CELLS).astype(np.int32)
            ranks = guide[cell]
            unresolved = ranks != guide_hi[cell]
            if unresolved.any():
                ranks[unresolved] = np.searchsorted(cdf, u[unresolved], side="right")
        out[start:stop] = perm[ranks]
    samples = out.reshape(num_samples, features)
    return Trace(
        num_ids=num_ids,
        features=features,
        samples=samples,
        provenance={
            "generator": "zipf",
            "exponent": float(exponent),
            "shift": float(shift),
            "num_samples": num_samples,
            "seed": int(seed),
        },
    )


@dataclass(frozen=True)
class SkewPreset:
    """A named skew target: which slice of the head covers which access share.

    ``shift_frac`` scales the Mandelbrot shift with the id space so the shape
    is roughly size-invariant; the exponent is re-calibrated per num_ids.
    """

    features: int
    top_fraction: float
    target_coverage: float
    shift_frac: float


# criteo_like: the head 0.14% of ids carries ~90% of accesses.
# avazu_like: the head 0.012% of ids carries ~90% of accesses.
# The shift keeps per-batch distinct-id counts near what a real click log
# shows at equal head coverage; a pure power law with the same head share
# would scatter accesses over far more distinct tail ids.
PRESETS: dict[str, SkewPreset] = {
    "criteo_like": SkewPreset(features=26, top_fraction=0.0014, target_coverage=0.90, shift_frac=1e-3),
    "avazu_like": SkewPreset(features=13, top_fraction=0.00012, target_coverage=0.90, shift_frac=5.5e-5),
}


@lru_cache(maxsize=64)
def preset_params(name: str, num_ids: int) -> tuple[float, float]:
    """(exponent, shift) for a preset at a given id-space size."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}, have {sorted(PRESETS)}") from None
    shift = preset.shift_frac * num_ids
    exponent = calibrate_exponent(num_ids, preset.top_fraction, preset.target_coverage, shift)
    return exponent, shift


def gen_preset(
    name: str, num_ids: int, num_samples: int, seed: int, features: int | None = None
) -> Trace:
    preset = PRESETS[name] if name in PRESETS else None
    if preset is None:
        raise ValueError(f"unknown preset {name!r}, have {sorted(PRESETS)}")
    exponent, shift = preset_params(name, num_ids)
    trace = gen_zipf(
        num_ids,
        exponent,
        num_samples,
        preset.features if features is None else features,
        seed,
        shift=shift,
    )
    trace.provenance["preset"] = name
    return trace


def gen_criteo_like(num_ids: int, num_samples: int, seed: int, features: int | None = None) -> Trace:
    return gen_preset("criteo_like", num_ids, num_samples, seed, features)


def gen_avazu_like(num_ids: int, num_samples: int, seed: int, features: int | None = None) -> Trace:
    return gen_preset("avazu_like", num_ids, num_samples, seed, features)


def batches(trace: Trace, batch_size: int) -> Iterator[Batch]:
    """Consecutive non-overlapping windows of the trace, flattened.

    The final partial batch is emitted. Each batch holds at most
    batch_size * features ids.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = trace.num_samples
    for seq, start in enumerate(range(0, n, batch_size)):
        window = trace.samples[start : start + batch_size]
        yield Batch(seq=seq, ids=window.reshape(-1))


def num_batches(trace: Trace, batch_size: int) -> int:
    return (trace.num_samples + batch_size - 1) // batch_size


@dataclass
class ColumnRemap:
    """Per-feature categorical remap into one offset global id space."""

    maps: list
    offsets: np.ndarray
    num_ids: int

    @property
    def table_sizes(self) -> list:
        return [len(m) for m in self.maps]


def save_csv(trace: Trace, path) -> None:
    """Write the trace in the plain CSV interchange format: header f0..fN,
    one sample per line, decimal global ids."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(trace.features)])
        for row in trace.samples:
            writer.writerow([int(v) for v in row])


def load_csv(
    path,
    feature_columns: list | None = None,
    id_remap: ColumnRemap | str | None = None,
    num_ids: int | None = None,
    on_error: str = "fail",
) -> Trace:
    """Read a categorical CSV into a Trace.

    By default every column value is remapped, per column and in first-seen
    order, into a contiguous global id space with per-feature offsets so the
    same raw value in different columns maps to different ids. Pass a
    previously built ColumnRemap to keep ids stable across files, or
    ``id_remap="identity"`` to parse values directly as global ids (the
    format ``save_csv`` emits); identity mode takes the id-space size from
    ``num_ids`` (default: max id + 1).

    Malformed rows raise with their line number, or are skipped when
    ``on_error="skip"``.
    """
    if on_error not in ("fail", "skip"):
        raise ValueError("on_error must be 'fail' or 'skip'")
    identity = id_remap == "identity"
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return Trace(num_ids=num_ids or 0, features=1, samples=np.empty((0, 1), dtype=np.int64))
        header = [h.strip() for h in header]
        if feature_columns is None:
            cols = list(range(len(header)))
        else:
            missing = [c for c in feature_columns if c not in header]
            if missing:
                raise ValueError(f"{path}: feature columns not in header: {missing}")
            cols = [header.index(c) for c in feature_columns]
        features = len(cols)

        if identity:
            remap = None
        elif id_remap is None:
            remap = ColumnRemap(maps=[{} for _ in cols], offsets=np.zeros(features, dtype=np.int64), num_ids=0)
        elif isinstance(id_remap, ColumnRemap):
            remap = id_remap
            if len(remap.maps) != features:
                raise ValueError(f"id_remap covers {len(remap.maps)} columns, trace has {features}")
        else:
            raise ValueError(f"id_remap must be None, 'identity', or a ColumnRemap, got {id_remap!r}")

        rows = []
        local_rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                if on_error == "skip":
                    continue
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                if identity:
                    rows.append([int(row[c]) for c in cols])
                else:
                    local = []
                    for f, c in enumerate(cols):
                        m = remap.maps[f]
                        local.append(m.setdefault(row[c], len(m)))
                    local_rows.append(local)
            except ValueError:
                if on_error == "skip":
                    continue
                raise ValueError(f"{path}:{lineno}: malformed id field") from None

    if identity:
        samples = np.asarray(rows, dtype=np.int64).reshape(-1, features)
        space = num_ids if num_ids is not None else (int(samples.max()) + 1 if samples.size else 0)
        return Trace(
            num_ids=space,
            features=features,
            samples=samples,
            provenance={"source": str(path), "remap": "identity"},
        )

    sizes = remap.table_sizes
    remap.offsets = np.concatenate([[0], np.cumsum(sizes[:-1])]).astype(np.int64)
    remap.num_ids = int(sum(sizes))
    samples = np.asarray(local_rows, dtype=np.int64).reshape(-1, features) + remap.offsets
    return Trace(
        num_ids=remap.num_ids,
        features=features,
        samples=samples,
        provenance={"source": str(path), "remap": "per_column"},
        table_sizes=sizes,
    )
