"""Segmented factorization sieve with exact combinatorial oracles.

The scan kernel walks every prime p <= sqrt(hi) once per segment, extracts
the exact exponent of p for each multiple, and feeds (p, positions,
exponents) to pluggable channels.  Everything downstream (divisor counts,
prime-factor counters, multiplicative-function values, window masks) is a
channel over the same audited loop.  Integer outputs stay integers.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from math import comb, isqrt, log2

import numpy as np

from .errors import CapacityError, UsageError, VerificationError
from .pool import map_ordered, ranges
from .primes import PrimeTable, prime_table

DEFAULT_SEGMENT = 1 << 22
MAX_SEGMENT = 1 << 26
_INT64_SAFE = 1 << 62

CACHE_MAGIC = b"DKSV"
CACHE_VERSION = 1
# flag bits for the binary segment cache, in serialized array order
FLAG_SPF = 1 << 0
FLAG_BIG_OMEGA = 1 << 1
FLAG_SMALL_OMEGA = 1 << 2
FLAG_MU_SQUARED = 1 << 3
FLAG_FACTORS = 1 << 4


@dataclass(frozen=True)
class FactorVector:
    """Exact prime factorization: ordered ((prime, exponent), ...) pairs.

    n = 1 is the empty tuple.  Primes must be strictly increasing and
    exponents >= 1; the represented integer is the product of p**a.
    """

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        last = 1
        for p, a in self.entries:
            if p <= last:
                raise UsageError("primes must be strictly increasing")
            if a < 1:
                raise UsageError("exponents must be >= 1")
            last = p

    @property
    def n(self) -> int:
        out = 1
        for p, a in self.entries:
            out *= p**a
        return out


def big_omega(fv: FactorVector) -> int:
    """Prime factors counted with multiplicity."""
    return sum(a for _, a in fv.entries)


def small_omega(fv: FactorVector) -> int:
    """Distinct prime factors."""
    return len(fv.entries)


def dk_value(fv: FactorVector, k: int) -> int:
    """Number of ordered k-tuples with product n: prod C(a+k-1, k-1).

    Exact (Python integers, no overflow possible).
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    out = 1
    for _, a in fv.entries:
        out *= comb(a + k - 1, k - 1)
    return out


def trial_division(n: int) -> FactorVector:
    """Independent factorization oracle: 2, 3, then a 6k+-1 wheel."""
    if n < 1:
        raise UsageError("n must be >= 1")
    entries = []
    m = n
    for p in (2, 3):
        a = 0
        while m % p == 0:
            m //= p
            a += 1
        if a:
            entries.append((p, a))
    d = 5
    while d * d <= m:
        for p in (d, d + 2):
            if m % p == 0:
                a = 0
                while m % p == 0:
                    m //= p
                    a += 1
                entries.append((p, a))
        d += 6
    if m > 1:
        entries.append((m, 1))
    return FactorVector(tuple(entries))


# ---------------------------------------------------------------------------
# scan kernel and channels
# ---------------------------------------------------------------------------


class Channel:
    """Receives factorization events for one segment [lo, hi)."""

    def start(self, lo: int, hi: int) -> None:  # pragma: no cover - trivial
        pass

    def prime(self, p: int, idx: np.ndarray, e: np.ndarray) -> None:
        """p divides lo+idx with exact exponents e (>= 1)."""

    def leftover(self, idx: np.ndarray, primes_left: np.ndarray) -> None:
        """Cofactors > sqrt(hi) remaining after all table primes: single big primes."""


class BigOmegaChannel(Channel):
    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=np.uint8)

    def prime(self, p, idx, e):
        self.values[idx] += e.astype(np.uint8)

    def leftover(self, idx, primes_left):
        self.values[idx] += 1


class SmallOmegaChannel(Channel):
    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=np.uint8)

    def prime(self, p, idx, e):
        self.values[idx] += 1

    def leftover(self, idx, primes_left):
        self.values[idx] += 1


class MuSquaredChannel(Channel):
    def start(self, lo, hi):
        self.values = np.ones(hi - lo, dtype=bool)

    def prime(self, p, idx, e):
        self.values[idx[e > 1]] = False


class SpfChannel(Channel):
    """Smallest prime factor <= sqrt(hi); 0 marks primes (and 1)."""

    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=np.uint32)

    def prime(self, p, idx, e):
        cur = self.values[idx]
        self.values[idx] = np.where(cur == 0, np.uint32(p), cur)


class DkChannel(Channel):
    """d_k(n) as exact int64, with an explicit overflow guard.

    A float64 shadow product tracks magnitudes when k**log2(hi) could
    exceed the int64 range; overflow raises, never wraps.
    """

    def __init__(self, k: int):
        if k < 1:
            raise UsageError("k must be >= 1")
        self.k = k
        self.table = np.array([comb(a + k - 1, k - 1) for a in range(65)], dtype=np.int64)

    def start(self, lo, hi):
        self.values = np.ones(hi - lo, dtype=np.int64)
        self._guard = self.k > 1 and log2(max(hi, 2)) * log2(self.k) >= 61
        if self._guard:
            self._shadow = np.ones(hi - lo, dtype=np.float64)

    def prime(self, p, idx, e):
        mult = self.table[e]
        self.values[idx] *= mult
        if self._guard:
            self._shadow[idx] *= mult.astype(np.float64)

    def leftover(self, idx, primes_left):
        self.values[idx] *= self.k
        if self._guard:
            self._shadow[idx] *= float(self.k)
            if float(self._shadow.max(initial=0.0)) >= float(_INT64_SAFE):
                raise OverflowError(
                    f"d_{self.k} exceeds the int64 range in this segment; "
                    "use dk_value on FactorVectors for exact big integers"
                )


class FactorListChannel(Channel):
    """Packed per-n factor lists (CSR layout) for O(omega) reconstruction."""

    def start(self, lo, hi):
        self.lo = lo
        self.n = hi - lo
        self._idx: list[np.ndarray] = []
        self._p: list[np.ndarray] = []
        self._e: list[np.ndarray] = []

    def prime(self, p, idx, e):
        self._idx.append(idx.astype(np.int64))
        self._p.append(np.full(idx.size, p, dtype=np.uint32))
        self._e.append(e.astype(np.uint8))

    def leftover(self, idx, primes_left):
        # big primes are appended here so every stored list is complete
        self._idx.append(idx.astype(np.int64))
        self._p.append(primes_left.astype(np.uint32))
        self._e.append(np.ones(idx.size, dtype=np.uint8))

    def finalize(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (offsets, primes, exps); entries of n at offsets[i]:offsets[i+1].

        Within one n the entries are ordered by increasing prime because
        the scan visits primes in increasing order and the sort is stable.
        """
        if self._idx:
            idx = np.concatenate(self._idx)
            ps = np.concatenate(self._p)
            es = np.concatenate(self._e)
            order = np.argsort(idx, kind="stable")
            idx, ps, es = idx[order], ps[order], es[order]
            counts = np.bincount(idx, minlength=self.n)
        else:
            ps = np.empty(0, dtype=np.uint32)
            es = np.empty(0, dtype=np.uint8)
            counts = np.zeros(self.n, dtype=np.int64)
        offsets = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return offsets, ps, es


class WindowCountChannel(Channel):
    """omega restricted to primes in [win_lo, win_hi]."""

    def __init__(self, win_lo: float, win_hi: float):
        self.win = (win_lo, win_hi)

    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=np.uint8)

    def prime(self, p, idx, e):
        if self.win[0] <= p <= self.win[1]:
            self.values[idx] += 1

    def leftover(self, idx, primes_left):
        inside = (primes_left >= self.win[0]) & (primes_left <= self.win[1])
        self.values[idx[inside]] += 1


class WindowSquareChannel(Channel):
    """Count of primes p in [win_lo, win_hi] with p*p dividing n."""

    def __init__(self, win_lo: float, win_hi: float):
        self.win = (win_lo, win_hi)

    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=np.uint8)

    def prime(self, p, idx, e):
        if self.win[0] <= p <= self.win[1]:
            self.values[idx[e > 1]] += 1


class WindowMaskChannel(Channel):
    """Boolean mask: n has at least one prime factor in [win_lo, win_hi]."""

    def __init__(self, win_lo: float, win_hi: float):
        self.win = (win_lo, win_hi)

    def start(self, lo, hi):
        self.values = np.zeros(hi - lo, dtype=bool)

    def prime(self, p, idx, e):
        if self.win[0] <= p <= self.win[1]:
            self.values[idx] = True

    def leftover(self, idx, primes_left):
        inside = (primes_left >= self.win[0]) & (primes_left <= self.win[1])
        self.values[idx[inside]] = True


def scan_range(lo: int, hi: int, table: PrimeTable, channels: list[Channel]) -> None:
    """Drive all channels over [lo, hi) with exact exponent extraction."""
    if not 1 <= lo < hi:
        raise UsageError(f"bad range [{lo}, {hi})")
    root = isqrt(hi - 1)
    if table.limit < root:
        raise UsageError(f"prime table to {table.limit} incomplete for hi={hi}")
    n_count = hi - lo
    rem = np.arange(lo, hi, dtype=np.int64)
    for ch in channels:
        ch.start(lo, hi)
    for p in table.upto(root):
        p = int(p)
        start = ((lo + p - 1) // p) * p
        if start >= hi:
            continue
        idx = np.arange(start - lo, n_count, p, dtype=np.int64)
        m = rem[idx] // p
        e = np.ones(idx.size, dtype=np.int64)
        sub = np.nonzero(m % p == 0)[0]
        while sub.size:
            m[sub] //= p
            e[sub] += 1
            sub = sub[m[sub] % p == 0]
        rem[idx] = m
        for ch in channels:
            ch.prime(p, idx, e)
    left = np.nonzero(rem > 1)[0]
    primes_left = rem[left]
    for ch in channels:
        ch.leftover(left, primes_left)


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------


@dataclass
class SieveSegment:
    """Exact factorization data over the half-open range [lo, hi)."""

    lo: int
    hi: int
    spf: np.ndarray | None = None
    big_omega: np.ndarray | None = None
    small_omega: np.ndarray | None = None
    mu_squared: np.ndarray | None = None
    factor_offsets: np.ndarray | None = None
    factor_primes: np.ndarray | None = None
    factor_exps: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.hi - self.lo

    def flags(self) -> int:
        f = 0
        if self.spf is not None:
            f |= FLAG_SPF
        if self.big_omega is not None:
            f |= FLAG_BIG_OMEGA
        if self.small_omega is not None:
            f |= FLAG_SMALL_OMEGA
        if self.mu_squared is not None:
            f |= FLAG_MU_SQUARED
        if self.factor_offsets is not None:
            f |= FLAG_FACTORS
        return f


_ARRAY_FLAGS = {
    "spf": FLAG_SPF,
    "big_omega": FLAG_BIG_OMEGA,
    "small_omega": FLAG_SMALL_OMEGA,
    "mu_squared": FLAG_MU_SQUARED,
    "factors": FLAG_FACTORS,
}

DEFAULT_ARRAYS = ("spf", "big_omega", "small_omega", "mu_squared", "factors")


def build_segment(
    lo: int,
    hi: int,
    table: PrimeTable | None = None,
    arrays: tuple[str, ...] = DEFAULT_ARRAYS,
    max_size: int = MAX_SEGMENT,
) -> SieveSegment:
    """Sieve one segment, producing the requested arrays.

    lo=1 is allowed (n=1 factors to the empty list); anything below is
    rejected.
    """
    if lo < 1 or hi <= lo:
        raise UsageError(f"bad segment range [{lo}, {hi})")
    if hi - lo > max_size:
        raise CapacityError(f"segment of {hi - lo} exceeds budget {max_size}")
    unknown = set(arrays) - set(_ARRAY_FLAGS)
    if unknown:
        raise UsageError(f"unknown arrays {sorted(unknown)}")
    if table is None:
        table = prime_table(isqrt(hi - 1))
    chans: dict[str, Channel] = {}
    if "spf" in arrays:
        chans["spf"] = SpfChannel()
    if "big_omega" in arrays:
        chans["big_omega"] = BigOmegaChannel()
    if "small_omega" in arrays:
        chans["small_omega"] = SmallOmegaChannel()
    if "mu_squared" in arrays:
        chans["mu_squared"] = MuSquaredChannel()
    if "factors" in arrays:
        chans["factors"] = FactorListChannel()
    scan_range(lo, hi, table, list(chans.values()))
    seg = SieveSegment(lo=lo, hi=hi)
    if "spf" in chans:
        seg.spf = chans["spf"].values
    if "big_omega" in chans:
        seg.big_omega = chans["big_omega"].values
    if "small_omega" in chans:
        seg.small_omega = chans["small_omega"].values
    if "mu_squared" in chans:
        seg.mu_squared = chans["mu_squared"].values
    if "factors" in chans:
        off, ps, es = chans["factors"].finalize()
        seg.factor_offsets, seg.factor_primes, seg.factor_exps = off, ps, es
    return seg


def factor(seg: SieveSegment, n: int) -> FactorVector:
    """Exact factorization of n from the segment's packed factor lists."""
    if not seg.lo <= n < seg.hi:
        raise UsageError(f"n={n} outside segment [{seg.lo}, {seg.hi})")
    if seg.factor_offsets is None:
        raise UsageError("segment was built without factor lists")
    i = n - seg.lo
    a, b = int(seg.factor_offsets[i]), int(seg.factor_offsets[i + 1])
    entries = [(int(p), int(e)) for p, e in zip(seg.factor_primes[a:b], seg.factor_exps[a:b])]
    return FactorVector(tuple(entries))


def dk_array(lo: int, hi: int, k: int, table: PrimeTable | None = None) -> np.ndarray:
    """d_k(n) for n in [lo, hi) as exact int64 (computed on demand)."""
    if table is None:
        table = prime_table(isqrt(hi - 1))
    ch = DkChannel(k)
    scan_range(lo, hi, table, [ch])
    return ch.values


# ---------------------------------------------------------------------------
# exact combinatorial oracles
# ---------------------------------------------------------------------------


def divisor_sum_hyperbola(x: int) -> int:
    """Sum of d(n) for n <= x via the hyperbola method, exact.

    2 * sum_{m <= sqrt(x)} floor(x/m) - floor(sqrt(x))^2.
    """
    if x < 1:
        raise UsageError("x must be >= 1")
    r = isqrt(x)
    m = np.arange(1, r + 1, dtype=np.int64)
    total = 2 * int(np.sum(x // m, dtype=np.int64)) - r * r
    return total


def squarefree_harmonic_oracle(x: int, threads: int = 1) -> int:
    """Sum over n <= x of 2^omega(n), via sum_{d <= x} mu^2(d) * floor(x/d).

    Independent of the sieve's omega counters: only squarefree flags enter.
    """
    if x < 1:
        raise UsageError("x must be >= 1")

    def part(rng: tuple[int, int]) -> int:
        lo, hi = rng
        ch = MuSquaredChannel()
        scan_range(lo, hi, prime_table(isqrt(x)), [ch])
        d = np.arange(lo, hi, dtype=np.int64)
        return int(np.sum(np.where(ch.values, x // d, 0), dtype=np.int64))

    parts = map_ordered(part, ranges(1, x + 1, DEFAULT_SEGMENT), threads)
    return sum(parts)


# ---------------------------------------------------------------------------
# binary segment cache
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sHQQH")


def _cache_path(cache_dir: str, lo: int, hi: int, flags: int) -> str:
    return os.path.join(cache_dir, f"seg_{lo}_{hi}_{flags:04x}.dksv")


def save_segment(seg: SieveSegment, cache_dir: str) -> str:
    """Serialize a segment; byte-identical for identical inputs."""
    os.makedirs(cache_dir, exist_ok=True)
    flags = seg.flags()
    path = _cache_path(cache_dir, seg.lo, seg.hi, flags)
    blobs = [_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, seg.lo, seg.hi, flags)]
    if seg.spf is not None:
        blobs.append(seg.spf.astype("<u4").tobytes())
    if seg.big_omega is not None:
        blobs.append(seg.big_omega.astype("<u1").tobytes())
    if seg.small_omega is not None:
        blobs.append(seg.small_omega.astype("<u1").tobytes())
    if seg.mu_squared is not None:
        blobs.append(seg.mu_squared.astype("<u1").tobytes())
    if seg.factor_offsets is not None:
        count = seg.factor_primes.size
        blobs.append(struct.pack("<Q", count))
        blobs.append(np.diff(seg.factor_offsets).astype("<u1").tobytes())
        blobs.append(seg.factor_primes.astype("<u4").tobytes())
        blobs.append(seg.factor_exps.astype("<u1").tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(blobs))
    os.replace(tmp, path)
    return path


def load_segment(cache_dir: str, lo: int, hi: int, flags: int) -> SieveSegment | None:
    """Load a cached segment; returns None on miss or any corruption."""
    path = _cache_path(cache_dir, lo, hi, flags)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError:
        return None
    if len(raw) < _HEADER.size:
        return None
    magic, version, flo, fhi, fflags = _HEADER.unpack_from(raw, 0)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        return None
    if flo != lo or fhi != hi or fflags != flags:
        return None
    n = hi - lo
    pos = _HEADER.size
    seg = SieveSegment(lo=lo, hi=hi)

    def take(count: int, dtype: str) -> np.ndarray | None:
        nonlocal pos
        nbytes = count * np.dtype(dtype).itemsize
        if pos + nbytes > len(raw):
            return None
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).copy()
        pos += nbytes
        return arr

    try:
        if flags & FLAG_SPF:
            seg.spf = take(n, "<u4")
        if flags & FLAG_BIG_OMEGA:
            seg.big_omega = take(n, "<u1")
        if flags & FLAG_SMALL_OMEGA:
            seg.small_omega = take(n, "<u1")
        if flags & FLAG_MU_SQUARED:
            arr = take(n, "<u1")
            seg.mu_squared = arr.astype(bool) if arr is not None else None
        if flags & FLAG_FACTORS:
            if pos + 8 > len(raw):
                return None
            (count,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            counts = take(n, "<u1")
            primes = take(count, "<u4")
            exps = take(count, "<u1")
            if counts is None or primes is None or exps is None:
                return None
            offsets = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts.astype(np.int64), out=offsets[1:])
            if offsets[-1] != count:
                return None
            seg.factor_offsets, seg.factor_primes, seg.factor_exps = offsets, primes, exps
    except (ValueError, struct.error):
        return None
    if pos != len(raw):
        return None
    needed = [
        (FLAG_SPF, seg.spf),
        (FLAG_BIG_OMEGA, seg.big_omega),
        (FLAG_SMALL_OMEGA, seg.small_omega),
        (FLAG_MU_SQUARED, seg.mu_squared),
    ]
    for bit, arr in needed:
        if flags & bit and arr is None:
            return None
    return seg


def get_segment(
    lo: int,
    hi: int,
    table: PrimeTable | None = None,
    arrays: tuple[str, ...] = DEFAULT_ARRAYS,
    cache_dir: str | None = None,
) -> tuple[SieveSegment, bool]:
    """Cached segment access; returns (segment, cache_hit).

    Corrupt cache entries are rebuilt and rewritten, never used.
    """
    flags = 0
    for name in arrays:
        flags |= _ARRAY_FLAGS[name]
    if cache_dir is not None:
        seg = load_segment(cache_dir, lo, hi, flags)
        if seg is not None:
            return seg, True
    seg = build_segment(lo, hi, table=table, arrays=arrays)
    if cache_dir is not None:
        save_segment(seg, cache_dir)
    return seg, False


def verify_segment_sample(seg: SieveSegment, sample: int = 64, seed: int = 1) -> None:
    """Cross-check a random sample of factorizations against trial division."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(seg.lo, seg.hi, size=min(sample, seg.size))
    for n in picks:
        n = int(n)
        got = factor(seg, n)
        want = trial_division(n)
        if got != want:
            raise VerificationError(f"factor({n}) = {got.entries} != {want.entries}")
