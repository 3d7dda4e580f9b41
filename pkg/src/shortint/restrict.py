"""Restriction sets, omega-concentration statistics, and pinned constants.

The two anchor prime windows and the omega budget define the sets used to
restrict partial sums; tail lemmas are measured against their stated
bounds with explicit envelope constants (implied constants are never
asserted as equalities).  Integer statistics use omega histograms, so
weighted sums like sum k^Omega(n) stay exact in arbitrary precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import isqrt, log

import numpy as np

from .errors import AccuracyError, DomainError, UsageError
from .multfun import MultiplicativeFunctionSpec, mertens_product, values_on_range
from .numutil import fsum_array, fsum_parts
from .pool import map_ordered, ranges
from .primes import PrimeTable, prime_table
from .sieve import (
    DEFAULT_SEGMENT,
    BigOmegaChannel,
    FactorVector,
    SmallOmegaChannel,
    WindowMaskChannel,
    scan_range,
)

_MAX_OMEGA = 64


@dataclass(frozen=True)
class RestrictionParams:
    """Two prime windows whose presence defines the anchored set.

    Desk-scale clamps are recorded in `clamped`; eps0 is the exponent of
    log X in the first window's upper end.
    """

    X: int
    window1: tuple[float, float]
    window2: tuple[float, float]
    eps0: float
    clamped: dict

    def windows(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.window1, self.window2)


def default_params(
    X: int,
    eps0: float | None = None,
    k: int = 2,
    alpha: float = 1.0,
    eps: float = 1.0,
    q2_cap_exponent: float = 0.1,
) -> RestrictionParams:
    """Window thresholds from the standard formulas, with desk-scale clamps.

    p1 = exp(sqrt(log log X)), q1 = (log X)^eps0, p2 = exp((log log X)^2),
    q2 = exp((log log X)^100).  Clamps applied (and flagged): q2 capped at
    X^(1/10), but never below 4*p2 (the cap must not invert the second
    window); q1 raised to p1^2.  eps0 defaults to (alpha*eps/3) log k.
    """
    if X < 16:
        raise UsageError("X must be >= 16")
    if eps0 is None:
        eps0 = (alpha * eps / 3.0) * log(max(k, 2))
    ll = log(log(X))
    p1 = math.exp(math.sqrt(ll))
    q1 = log(X) ** eps0
    p2 = math.exp(ll**2)
    log_q2_formula = ll**100
    log_q2_cap = max(q2_cap_exponent * log(X), log(4.0 * p2))
    clamped = {"q1": False, "q2": False}
    if log_q2_formula > log_q2_cap:
        clamped["q2"] = True
        q2 = math.exp(log_q2_cap)
    else:
        q2 = math.exp(log_q2_formula)
    if q1 < p1 * p1:
        clamped["q1"] = True
        q1 = p1 * p1
    p1 = max(2.0, p1)
    if not (2 <= p1 <= q1 and 2 <= p2 <= q2):
        raise UsageError(f"invalid windows after clamping: {(p1, q1)}, {(p2, q2)}")
    return RestrictionParams(
        X=X, window1=(p1, q1), window2=(p2, q2), eps0=eps0, clamped=clamped
    )


def has_anchor_primes(fv: FactorVector, params: RestrictionParams) -> bool:
    """True iff the factorization has a prime in each of the two windows."""
    for lo, hi in params.windows():
        if not any(lo <= p <= hi for p, _ in fv.entries):
            return False
    return True


def omega_budget(eps: float, pf_x: float, X: int) -> float:
    """Prime-factor budget (1+eps) log(P_f(X) log X)."""
    if pf_x <= 0 or X <= math.e:
        raise UsageError("need P_f > 0 and X > e")
    return (1.0 + eps) * log(pf_x * log(X))


def omega_within_budget(fv: FactorVector, eps: float, pf_x: float, X: int) -> bool:
    """True iff Omega(n) <= (1+eps) log(P_f(X) log X)."""
    return sum(a for _, a in fv.entries) <= omega_budget(eps, pf_x, X)


def anchor_masks(
    lo: int, hi: int, params: RestrictionParams, table: PrimeTable
) -> tuple[np.ndarray, np.ndarray]:
    """Boolean per-n masks for prime presence in each window over [lo, hi)."""
    ch1 = WindowMaskChannel(*params.window1)
    ch2 = WindowMaskChannel(*params.window2)
    scan_range(lo, hi, table, [ch1, ch2])
    return ch1.values, ch2.values


# ---------------------------------------------------------------------------
# tail sums against their stated bounds
# ---------------------------------------------------------------------------


def tail_sum_many_factors(
    spec: MultiplicativeFunctionSpec,
    X: int,
    eps: float,
    delta: float,
    threads: int = 1,
    segment: int = DEFAULT_SEGMENT,
    table: PrimeTable | None = None,
    envelope: float = 100.0,
) -> dict:
    """Mass of |f| on (X, 3X] carried by integers over the omega budget.

    Compares against X P_f (P_f log X)^(-(1+eps)log(1+delta)+delta) and
    verifies the Rankin step lhs <= sum |f(n)| (1+delta)^(Omega(n)-budget)
    termwise (reported as an aggregate, exact per term by construction).
    """
    if not 0 < delta < 1:
        raise UsageError("need 0 < delta < 1")
    if table is None:
        table = prime_table(isqrt(3 * X))
    pf = mertens_product(spec, X, prime_table(X))
    budget = omega_budget(eps, pf, X)

    def job(rng):
        lo, hi = rng
        om = BigOmegaChannel()
        scan_range(lo, hi, table, [om])
        absf = np.abs(values_on_range(spec, lo, hi, table)).astype(np.float64)
        over = om.values > budget
        lhs_part = float(np.sum(absf[over]))
        rankin_part = float(np.sum(absf * (1.0 + delta) ** (om.values.astype(np.float64) - budget)))
        return lhs_part, rankin_part

    parts = map_ordered(job, ranges(X + 1, 3 * X + 1, segment), threads)
    lhs = fsum_parts([p[0] for p in parts])
    rankin = fsum_parts([p[1] for p in parts])
    rhs = X * pf * (pf * log(X)) ** (-(1.0 + eps) * math.log1p(delta) + delta)
    ratio = lhs / rhs if rhs > 0 else math.inf
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "rankin_rhs": rankin,
        "rankin_holds": lhs <= rankin * (1 + 1e-12) + 1e-9,
        "budget": budget,
        "pf": pf,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


def tail_sum_outside_anchors(
    spec: MultiplicativeFunctionSpec,
    X: int,
    params: RestrictionParams,
    threads: int = 1,
    segment: int = DEFAULT_SEGMENT,
    table: PrimeTable | None = None,
    envelope: float = 100.0,
) -> dict:
    """Mass of |f| on (X, 2X] outside the anchored set, against the
    complement-product bound X P_f(2X) sum_j prod_{p in window_j} (1 - |f(p)|/p)."""
    if table is None:
        table = prime_table(isqrt(2 * X))

    def job(rng):
        lo, hi = rng
        m1, m2 = anchor_masks(lo, hi, params, table)
        absf = np.abs(values_on_range(spec, lo, hi, table)).astype(np.float64)
        outside = ~(m1 & m2)
        return float(np.sum(absf[outside])), float(np.sum(absf))

    parts = map_ordered(job, ranges(X + 1, 2 * X + 1, segment), threads)
    lhs = fsum_parts([p[0] for p in parts])
    full = fsum_parts([p[1] for p in parts])
    big_table = prime_table(max(int(params.window1[1]), int(params.window2[1]), 2))
    pf2 = mertens_product(spec, 2 * X, prime_table(2 * X))
    comp_sum = 0.0
    for win in params.windows():
        ps = big_table.in_window(win[0], win[1]).astype(np.float64)
        if ps.size == 0:
            comp_sum += 1.0
            continue
        absf = np.abs(np.asarray(spec.prime_values(big_table.in_window(win[0], win[1]))))
        factors = 1.0 - absf / ps
        if np.any(factors <= 0.0):
            raise DomainError(f"|f(p)| >= p for some p in window {win}")
        comp_sum += math.exp(fsum_array(np.log(factors)))
    rhs = X * pf2 * comp_sum
    ratio = lhs / rhs if rhs > 0 else math.inf
    return {
        "lhs": lhs,
        "rhs_factor": rhs,
        "ratio": ratio,
        "full_sum": full,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


def anchored_density(
    X: int,
    params: RestrictionParams,
    threads: int = 1,
    segment: int = DEFAULT_SEGMENT,
    table: PrimeTable | None = None,
) -> float:
    """Fraction of (X, 2X] having a prime factor in both windows."""
    if table is None:
        table = prime_table(isqrt(2 * X))

    def job(rng):
        lo, hi = rng
        m1, m2 = anchor_masks(lo, hi, params, table)
        return int(np.count_nonzero(m1 & m2))

    hits = sum(map_ordered(job, ranges(X + 1, 2 * X + 1, segment), threads))
    return hits / X


# ---------------------------------------------------------------------------
# omega histograms and exact k^Omega style sums
# ---------------------------------------------------------------------------


def omega_histograms(
    x: int,
    lo: int = 1,
    threads: int = 1,
    segment: int = DEFAULT_SEGMENT,
    table: PrimeTable | None = None,
    cache_dir: str | None = None,
    cache_stats: dict | None = None,
) -> np.ndarray:
    """Joint (omega, Omega) counts over [lo, x] as a 64x64 int64 matrix.

    Every k^Omega-weighted statistic reduces to this histogram, so the
    weighted sums can be taken in exact Python integers afterwards.  With
    cache_dir set, per-segment counter arrays come from the binary segment
    cache (hits recorded in cache_stats["hits"]).
    """
    if table is None:
        table = prime_table(isqrt(x))

    def job(rng):
        a, b = rng
        if cache_dir is not None:
            from .sieve import get_segment

            seg, hit = get_segment(
                a, b, table=table, arrays=("big_omega", "small_omega"), cache_dir=cache_dir
            )
            if cache_stats is not None and hit:
                cache_stats["hits"] = cache_stats.get("hits", 0) + 1
            som_v, bom_v = seg.small_omega, seg.big_omega
        else:
            som = SmallOmegaChannel()
            bom = BigOmegaChannel()
            scan_range(a, b, table, [som, bom])
            som_v, bom_v = som.values, bom.values
        key = som_v.astype(np.int64) * _MAX_OMEGA + bom_v.astype(np.int64)
        return np.bincount(key, minlength=_MAX_OMEGA * _MAX_OMEGA)

    parts = map_ordered(job, ranges(lo, x + 1, segment), threads)
    total = np.zeros(_MAX_OMEGA * _MAX_OMEGA, dtype=np.int64)
    for p in parts:
        total += p
    return total.reshape(_MAX_OMEGA, _MAX_OMEGA)


def euler_ck(k: int, tol: float = 1e-6, max_cutoff: int = 1 << 28) -> dict:
    """Leading constant of sum_{n<=x} k^omega(n) ~ c_k x log^{k-1} x.

    c_k = (1/(k-1)!) prod_p (1-1/p)^k (1 + k/(p-1)), evaluated over primes
    up to an adaptive cutoff so the log-tail bound stays below tol.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if k == 1:
        return {"c_k": 1.0, "tail_bound": 0.0, "cutoff": 2}
    coeff = k * k / 2.0 + 1.5 * k + 1.0
    cutoff = int(coeff / tol) + 10
    if cutoff > max_cutoff:
        raise AccuracyError(
            f"prime cutoff {cutoff} for tolerance {tol} exceeds budget {max_cutoff}"
        )
    ps = prime_table(cutoff).upto(cutoff).astype(np.float64)
    terms = k * np.log1p(-1.0 / ps) + np.log1p(k / (ps - 1.0))
    value = math.exp(fsum_array(terms)) / math.factorial(k - 1)
    tail = coeff / (cutoff - 1.0)
    return {"c_k": value, "tail_bound": tail, "cutoff": cutoff}


def kpow_omega_sum(
    x: int,
    k: int,
    threads: int = 1,
    tol: float = 1e-6,
    hist: np.ndarray | None = None,
    table: PrimeTable | None = None,
) -> dict:
    """Exact sum of k^omega(n) for n <= x, with the predicted leading constant.

    The sum is assembled from the omega histogram in Python integers, so no
    overflow is possible.  normalized = sum / (x log^{k-1} x).
    """
    if x < 1:
        raise UsageError("x must be >= 1")
    if hist is None:
        hist = omega_histograms(x, threads=threads, table=table)
    counts = hist.sum(axis=1)
    total = sum(int(c) * k**w for w, c in enumerate(counts.tolist()) if c)
    ck = euler_ck(k, tol=tol)
    normalized = total / (x * log(x) ** (k - 1)) if x > 1 else float(total)
    return {"sum": total, "c_k": ck["c_k"], "c_k_tail": ck["tail_bound"], "normalized": normalized}


def concentrated_dk_tail(
    x: int,
    k: int,
    eps: float,
    threads: int = 1,
    hist: np.ndarray | None = None,
    table: PrimeTable | None = None,
) -> dict:
    """Exact k^Omega mass on integers with omega far from k log log x.

    Also runs the Rankin-step self-check for the low-omega part with
    A = (k - eps)/k: sum over omega-deficient n of k^Omega is at most
    sum_n k^Omega A^omega A^{-(k-eps) log log x}.
    """
    if x < 16:
        raise UsageError("x must be >= 16")
    if hist is None:
        hist = omega_histograms(x, threads=threads, table=table)
    llx = log(log(x))
    band_lo = k * llx - eps * llx
    band_hi = k * llx + eps * llx
    lhs = 0
    lhs_low = 0
    for w in range(_MAX_OMEGA):
        row = hist[w]
        deviant = not (band_lo <= w <= band_hi)
        for om in range(_MAX_OMEGA):
            c = int(row[om])
            if not c:
                continue
            if deviant:
                lhs += c * k**om
            if w < band_lo:
                lhs_low += c * k**om
    norm = x * log(x) ** (k - 1)
    rankin_rhs = 0.0
    holds = None
    if k > 1 and eps < k:
        a_val = (k - eps) / k
        scale = a_val ** (-(k - eps) * llx)
        for w in range(_MAX_OMEGA):
            for om in range(_MAX_OMEGA):
                c = int(hist[w, om])
                if c:
                    rankin_rhs += c * float(k**om) * a_val**w * scale
        holds = lhs_low <= rankin_rhs * (1 + 1e-12) + 1e-9
    return {
        "lhs": lhs,
        "normalized": lhs / norm,
        "lhs_low_omega": lhs_low,
        "rankin_rhs": rankin_rhs,
        "rankin_holds": holds,
        "band": [band_lo, band_hi],
    }


@dataclass
class ConcentrationReport:
    """Counts of omega-typical vs deviant integers with their bracket values."""

    x: int
    k: int
    eps_prime: float
    typical: int
    deviant: int
    typical_weighted: int
    deviant_weighted: int
    bracket_lower: float
    bracket_upper: float

    def ratios(self) -> dict:
        return {
            "lower": self.typical / self.bracket_lower if self.bracket_lower > 0 else math.inf,
            "upper": self.typical / self.bracket_upper if self.bracket_upper > 0 else math.inf,
        }


def omega_concentration_counts(
    x: int,
    k: int,
    eps_prime: float,
    threads: int = 1,
    hist: np.ndarray | None = None,
    table: PrimeTable | None = None,
) -> ConcentrationReport:
    """Count integers n <= x with |omega(n) - k log log x| <= eps' log log x,
    bracketed by x/(log x)^((k±eps')log k - k + 1)."""
    if x < 16:
        raise UsageError("x must be >= 16")
    if eps_prime < 0:
        raise UsageError("eps_prime must be >= 0")
    if hist is None:
        hist = omega_histograms(x, threads=threads, table=table)
    llx = log(log(x))
    band_lo = k * llx - eps_prime * llx
    band_hi = k * llx + eps_prime * llx
    typical = 0
    deviant = 0
    typ_w = 0
    dev_w = 0
    for w in range(_MAX_OMEGA):
        for om in range(_MAX_OMEGA):
            c = int(hist[w, om])
            if not c:
                continue
            if band_lo <= w <= band_hi:
                typical += c
                typ_w += c * k**om
            else:
                deviant += c
                dev_w += c * k**om
    lk = log(k) if k > 1 else 0.0
    lower = x / log(x) ** ((k + eps_prime) * lk - k + 1)
    upper = x / log(x) ** ((k - eps_prime) * lk - k + 1)
    return ConcentrationReport(
        x=x,
        k=k,
        eps_prime=eps_prime,
        typical=typical,
        deviant=deviant,
        typical_weighted=typ_w,
        deviant_weighted=dev_w,
        bracket_lower=lower,
        bracket_upper=upper,
    )


# ---------------------------------------------------------------------------
# Shiu-style window ratio and the pinned constants
# ---------------------------------------------------------------------------


def shiu_ratio(
    spec: MultiplicativeFunctionSpec,
    Y: float,
    y: float,
    X: float | None = None,
    delta: float = 0.1,
    table: PrimeTable | None = None,
) -> dict:
    """Measured implied constant of the short-window upper bound:
    sum_{Y-y<n<=Y} |f(n)| / (y P_f(X))."""
    if X is None:
        X = Y
    if not (math.sqrt(X) < Y <= X):
        raise UsageError("need sqrt(X) < Y <= X")
    if not (Y**delta <= y <= Y):
        raise UsageError(f"need Y^delta={Y**delta:.3g} <= y <= Y")
    lo = int(math.floor(Y - y)) + 1
    hi = int(math.floor(Y)) + 1
    if table is None:
        table = prime_table(max(isqrt(hi - 1), 3))
    absf = np.abs(values_on_range(spec, lo, hi, table)).astype(np.float64)
    lhs = fsum_array(absf)
    pf = mertens_product(spec, X, prime_table(int(X)))
    return {"lhs": lhs, "pf": pf, "ratio": lhs / (y * pf), "Y": Y, "y": y}


def rho_sigma(k: int, alpha: float) -> dict:
    """The distance floor rho = k(alpha/3 - (2/(3 pi)) sin(pi alpha/2)) and
    sigma = min(1, rho)/4.

    Evaluated as k * (2/(3 pi)) * (u - sin u) with u = pi alpha / 2, which
    is algebraically identical; a Taylor branch below u = 1e-3 avoids the
    cancellation that would otherwise round rho to zero for tiny alpha.
    The linear scaling in k is exact in floating point.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if not 0 < alpha <= 1:
        raise UsageError("need 0 < alpha <= 1")
    u = math.pi * alpha / 2.0
    if u < 1e-3:
        u_minus_sin = u**3 / 6.0 - u**5 / 120.0 + u**7 / 5040.0
    else:
        u_minus_sin = u - math.sin(u)
    rho = k * ((2.0 / (3.0 * math.pi)) * u_minus_sin)
    if rho <= 0:
        raise DomainError(f"rho({k}, {alpha}) = {rho} is not positive")
    sigma = min(1.0, rho) / 4.0
    return {"rho": rho, "sigma": sigma}
