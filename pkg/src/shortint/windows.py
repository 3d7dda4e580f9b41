"""Short-interval statistics: window sums, discrepancies, variances.

A ValueTable holds f(n) over (n0, n1] with prefix sums (exact int64 when f
is integer-valued and untwisted, block-compensated floating point
otherwise), so every window sum is a single prefix difference.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass
from math import isqrt, log

import numpy as np

from .errors import CapacityError, UsageError
from .multfun import MultiplicativeFunctionSpec, values_on_range
from .numutil import INT64_SAFE, compensated_cumsum, fsum_parts
from .pool import map_ordered, ranges
from .primes import PrimeTable, prime_table
from .sieve import DEFAULT_SEGMENT, DkChannel, SmallOmegaChannel, scan_range

_CHUNK = 1 << 20


@dataclass
class ValueTable:
    """f(n) for n in (n0, n1] with prefix sums (plain and t0-twisted)."""

    spec_name: str
    X: int
    h_max: int
    t0: float
    n0: int
    n1: int
    values: np.ndarray
    prefix: np.ndarray
    prefix_twist: np.ndarray | None = None

    @classmethod
    def build(
        cls,
        spec: MultiplicativeFunctionSpec,
        X: int,
        h_max: int,
        t0: float = 0.0,
        threads: int = 1,
        segment: int = DEFAULT_SEGMENT,
        table: PrimeTable | None = None,
    ) -> "ValueTable":
        if X < 16 or h_max < 0:
            raise UsageError("need X >= 16 and h_max >= 0")
        n0 = max(0, X - h_max)
        n1 = 2 * X + h_max
        if table is None:
            table = prime_table(isqrt(n1))

        def job(rng):
            return values_on_range(spec, rng[0], rng[1], table)

        parts = map_ordered(job, ranges(n0 + 1, n1 + 1, segment), threads)
        values = np.concatenate(parts)
        if values.dtype.kind in "iu":
            total = float(np.sum(np.abs(values).astype(np.float64)))
            if total >= INT64_SAFE:
                raise CapacityError("prefix sums would overflow int64; range too large")
            prefix = np.zeros(values.size + 1, dtype=np.int64)
            np.cumsum(values, out=prefix[1:])
            if values.size and int(np.max(np.abs(values))) < 2**31:
                values = values.astype(np.int32)  # halves memory at 1e8 scale
        else:
            prefix = np.zeros(values.size + 1, dtype=values.dtype)
            prefix[1:] = compensated_cumsum(values)
        prefix_twist = None
        if t0 != 0.0:
            n = np.arange(n0 + 1, n1 + 1, dtype=np.float64)
            tw = values.astype(np.complex128) * np.exp(-1j * t0 * np.log(n))
            prefix_twist = np.zeros(values.size + 1, dtype=np.complex128)
            prefix_twist[1:] = compensated_cumsum(tw)
        return cls(
            spec_name=spec.name,
            X=X,
            h_max=h_max,
            t0=t0,
            n0=n0,
            n1=n1,
            values=values,
            prefix=prefix,
            prefix_twist=prefix_twist,
        )

    def sum_range(self, a: int, b: int):
        """Sum of f(n) over (a, b]."""
        if not (self.n0 <= a <= b <= self.n1):
            raise UsageError(f"({a}, {b}] outside table ({self.n0}, {self.n1}]")
        return self.prefix[b - self.n0] - self.prefix[a - self.n0]

    def sum_range_twisted(self, a: int, b: int) -> complex:
        """Sum of f(n) n^{-i t0} over (a, b]."""
        if self.t0 == 0.0:
            return complex(self.sum_range(a, b))
        if not (self.n0 <= a <= b <= self.n1):
            raise UsageError(f"({a}, {b}] outside table ({self.n0}, {self.n1}]")
        return complex(self.prefix_twist[b - self.n0] - self.prefix_twist[a - self.n0])


def window_sums(table: ValueTable, h: int) -> np.ndarray:
    """S_{f,h}(x) = sum over (x, x+h] for every integer x in [X, 2X]."""
    if h < 0 or h > table.h_max:
        raise UsageError(f"h={h} exceeds table margin {table.h_max}")
    X, n0 = table.X, table.n0
    lo = X - n0
    hi = 2 * X - n0
    return table.prefix[lo + h : hi + h + 1] - table.prefix[lo : hi + 1]


def window_weight(x: float, h: float, t0: float, mean: bool = False) -> complex:
    """Integral of u^{i t0} over [x, x+h]; divided by h when mean=True.

    t0 = 0 collapses to h exactly (mean 1), keeping integer cases exact.
    """
    if x < 1 or h < 0:
        raise UsageError("need x >= 1 and h >= 0")
    if t0 == 0.0:
        val = complex(h)
    else:
        s = complex(1.0, t0)
        val = (cmath.exp(s * cmath.log(x + h)) - cmath.exp(s * cmath.log(x))) / s
    return val / h if mean else val


def _window_weights_mean(xs: np.ndarray, h: int, t0: float) -> np.ndarray:
    if t0 == 0.0:
        return np.ones(xs.size, dtype=np.float64)
    s = complex(1.0, t0)
    return (np.exp(s * np.log(xs + h)) - np.exp(s * np.log(xs))) / (s * h)


def long_reference(table: ValueTable) -> complex:
    """(1/X) sum over (X, 2X] of f(n) n^{-i t0}, from the table's own prefix."""
    return table.sum_range_twisted(table.X, 2 * table.X) / table.X


@dataclass
class WindowScan:
    """Per-x discrepancy statistics for one (X, h, t0) experiment."""

    X: int
    h: int
    t0: float
    normalizer: float
    long_ref: complex
    summary: dict
    delta: np.ndarray | None = None
    quantile_stride: int = 1
    etas: tuple = ()

    def to_summary_json(self) -> dict:
        return {
            "X": self.X,
            "h": self.h,
            "t0": self.t0,
            "normalizer": self.normalizer,
            "mean_abs": self.summary["mean_abs"],
            "l2": self.summary["l2"],
            "quantiles": {
                "p50": self.summary["p50"],
                "p90": self.summary["p90"],
                "p99": self.summary["p99"],
            },
            "exceptional": [
                {"eta": e, "fraction": f} for e, f in zip(self.etas, self.summary["exceptional"])
            ],
        }


def discrepancy_profile(
    table: ValueTable,
    h: int,
    t0: float | None = None,
    long_ref: complex | None = None,
    normalizer: float = 1.0,
    etas: tuple = (0.25, 0.5, 1.0),
    store_delta_limit: int = 1 << 24,
    chunk: int = _CHUNK,
) -> WindowScan:
    """Delta(x) = (1/h) S_h(x) - mean window weight * long reference, x in [X, 2X].

    Counts, moments, and quantiles accumulate in fixed chunk order, so
    results do not depend on thread count.
    """
    if h <= 0:
        raise UsageError("h must be positive")
    if t0 is None:
        t0 = table.t0
    if t0 != table.t0:
        raise UsageError(f"t0={t0} inconsistent with table built at t0={table.t0}")
    if long_ref is None:
        long_ref = long_reference(table)
    X, n0 = table.X, table.n0
    count = X + 1
    store = count <= store_delta_limit
    delta_full = np.empty(count, dtype=np.complex128 if t0 != 0.0 else np.float64) if store else None
    stride = 1 if store else max(1, (count + (1 << 22) - 1) // (1 << 22))
    sampled: list[np.ndarray] = []
    abs_parts: list[float] = []
    sq_parts: list[float] = []
    exc_counts = [0] * len(etas)
    thresholds = [e * normalizer for e in etas]
    for a in range(0, count, chunk):
        b = min(a + chunk, count)
        lo = X - n0 + a
        s = table.prefix[lo + h : lo + (b - a) + h] - table.prefix[lo : lo + (b - a)]
        xs = np.arange(X + a, X + b, dtype=np.float64)
        if t0 == 0.0:
            d = s / h - long_ref.real
        else:
            d = s.astype(np.complex128) / h - _window_weights_mean(xs, h, t0) * long_ref
        ad = np.abs(d)
        abs_parts.append(float(np.sum(ad)))
        sq_parts.append(float(np.sum(ad * ad)))
        for j, thr in enumerate(thresholds):
            exc_counts[j] += int(np.count_nonzero(ad > thr))
        if store:
            delta_full[a:b] = d
        else:
            sampled.append(ad[:: stride])
    mean_abs = fsum_parts(abs_parts) / count
    l2 = fsum_parts(sq_parts) / count
    if store:
        abs_all = np.abs(delta_full)
    else:
        abs_all = np.concatenate(sampled)
    p50, p90, p99 = (float(q) for q in np.quantile(abs_all, [0.5, 0.9, 0.99]))
    if l2 < mean_abs * mean_abs - 1e-9:
        raise AssertionError("Cauchy-Schwarz violated; accumulation bug")
    summary = {
        "mean_abs": mean_abs,
        "l2": l2,
        "p50": p50,
        "p90": p90,
        "p99": p99,
        "exceptional": [c / count for c in exc_counts],
    }
    return WindowScan(
        X=X,
        h=h,
        t0=t0,
        normalizer=normalizer,
        long_ref=long_ref,
        summary=summary,
        delta=delta_full,
        quantile_stride=stride,
        etas=tuple(etas),
    )


def exceptional_measure(scan: WindowScan, eta: float) -> float:
    """Fraction of x in [X, 2X] with |Delta(x)| > eta * normalizer."""
    if eta <= 0:
        raise UsageError("eta must be positive")
    if scan.delta is not None:
        thr = eta * scan.normalizer
        return float(np.count_nonzero(np.abs(scan.delta) > thr)) / (scan.X + 1)
    for e, f in zip(scan.etas, scan.summary["exceptional"]):
        if e == eta:
            return f
    raise UsageError(f"eta={eta} not precomputed and delta not stored")


def l2_variance(table: ValueTable, h: int, mode: str = "plain") -> float:
    """Mean of |Delta(x)|^2 over integer x in [X, 2X].

    mode "plain": untwisted centering (t0 = 0); mode "twisted": the table's
    t0 with the mean window weight.
    """
    if mode not in ("plain", "twisted"):
        raise UsageError("mode must be 'plain' or 'twisted'")
    if mode == "twisted":
        t0 = table.t0
        long_ref = long_reference(table)
    else:
        t0 = 0.0
        long_ref = complex(table.sum_range(table.X, 2 * table.X)) / table.X
    X, n0 = table.X, table.n0
    count = X + 1
    sq_parts: list[float] = []
    for a in range(0, count, _CHUNK):
        b = min(a + _CHUNK, count)
        lo = X - n0 + a
        s = table.prefix[lo + h : lo + (b - a) + h] - table.prefix[lo : lo + (b - a)]
        if t0 == 0.0:
            d = s / h - long_ref.real
            sq_parts.append(float(np.sum(d * d)))
        else:
            xs = np.arange(X + a, X + b, dtype=np.float64)
            d = s.astype(np.complex128) / h - _window_weights_mean(xs, h, t0) * long_ref
            ad = np.abs(d)
            sq_parts.append(float(np.sum(ad * ad)))
    return fsum_parts(sq_parts) / count


def inverse_threshold_experiment(
    X: int,
    k: int,
    eps_prime: float,
    h_grid: list[int],
    threads: int = 1,
    segment: int = DEFAULT_SEGMENT,
    table: PrimeTable | None = None,
) -> dict:
    """Per h: fraction of windows containing no integer with near-typical
    omega, and the window-average d_k mass carried by the omega-deviant
    integers, normalized by log^{k-1} X.

    The typical band is |omega(n) - k log log X| <= eps_prime * log log X.
    """
    if X < 16:
        raise UsageError("X must be >= 16")
    if eps_prime >= k:
        raise UsageError("eps_prime must be < k (the window would cover everything)")
    if eps_prime <= 0:
        raise UsageError("eps_prime must be positive")
    llx = log(log(X))
    band_lo = k * llx - eps_prime * llx
    band_hi = k * llx + eps_prime * llx
    h_max = max(h_grid, default=0)
    n_total = X + h_max
    if table is None:
        table = prime_table(isqrt(2 * X + h_max))
    pref_typ = np.zeros(n_total + 1, dtype=np.int32)
    pref_dev = np.zeros(n_total + 1, dtype=np.int64)

    def job(rng):
        lo, hi = rng
        om = SmallOmegaChannel()
        dk = DkChannel(k)
        scan_range(lo, hi, table, [om, dk])
        typ = (om.values >= band_lo) & (om.values <= band_hi)
        return np.cumsum(typ.astype(np.int32)), np.cumsum(np.where(typ, 0, dk.values))

    pos = 1
    for typ_c, dev_c in map_ordered(job, ranges(X + 1, 2 * X + h_max + 1, segment), threads):
        n = typ_c.size
        pref_typ[pos : pos + n] = pref_typ[pos - 1] + typ_c
        pref_dev[pos : pos + n] = pref_dev[pos - 1] + dev_c
        pos += n
    rows = []
    norm = log(X) ** (k - 1)
    for h in h_grid:
        if h == 0:
            rows.append({"h": 0, "vanish_fraction": 1.0, "concentrated_dk_mass": 0.0})
            continue
        vanish = 0
        mass_parts: list[float] = []
        for a in range(0, X + 1, _CHUNK):
            b = min(a + _CHUNK, X + 1)
            tc = pref_typ[a + h : b + h] - pref_typ[a : b]
            vanish += int(np.count_nonzero(tc == 0))
            dm = pref_dev[a + h : b + h] - pref_dev[a : b]
            mass_parts.append(float(np.sum(dm.astype(np.float64))))
        rows.append(
            {
                "h": h,
                "vanish_fraction": vanish / (X + 1),
                "concentrated_dk_mass": fsum_parts(mass_parts) / (X + 1) / h / norm,
            }
        )
    return {
        "X": X,
        "k": k,
        "eps_prime": eps_prime,
        "band": [band_lo, band_hi],
        "rows": rows,
        "typical_density": float(pref_typ[X]) / X,
    }
