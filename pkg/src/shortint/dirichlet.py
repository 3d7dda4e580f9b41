"""Dirichlet polynomial evaluation and the mean-value / large-value toolkit.

Grid evaluation uses per-term incremental phase rotation (one complex
multiply per term and grid step) with periodic re-seeding from direct
exponentiation, the main performance surface of this module.  The
one-prime-factor decomposition of a coefficient sum is implemented as an
exact identity: the five pieces must reproduce the left side to rounding,
and a residual above tolerance raises.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import isqrt, log

import numpy as np

from .errors import AccuracyError, UsageError, VerificationError
from .multfun import (
    MultiplicativeFunctionSpec,
    eval_spec,
    h_threshold,
    mertens_product,
    values_on_range,
)
from .numutil import csum_array, csum_parts, fsum_array, fsum_parts, quad_grid, trapezoid
from .primes import PrimeTable, prime_table
from .restrict import RestrictionParams, default_params, omega_budget
from .sieve import (
    BigOmegaChannel,
    WindowCountChannel,
    WindowMaskChannel,
    WindowSquareChannel,
    scan_range,
    trial_division,
)

_RESEED = 1 << 10


@dataclass
class DirichletGrid:
    """Coefficients over [n_lo, n_hi] and A(1+it) on a uniform t-grid."""

    n_lo: int
    n_hi: int
    coeffs: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray

    def abs_coeff_harmonic(self) -> float:
        n = np.arange(self.n_lo, self.n_hi + 1, dtype=np.float64)
        return fsum_array(np.abs(self.coeffs) / n)


def dirichlet_values(ns: np.ndarray, coeffs: np.ndarray, t_values) -> np.ndarray:
    """sum coeffs[n] * n^{-1-it} for each t, by direct evaluation."""
    ln = np.log(ns.astype(np.float64))
    base = coeffs.astype(np.complex128) / ns
    out = np.empty(len(t_values), dtype=np.complex128)
    for j, t in enumerate(t_values):
        out[j] = csum_array(base * np.exp(-1j * t * ln))
    return out


def _direct_grid(
    coeffs: np.ndarray,
    n_lo: int,
    ts: np.ndarray,
    sigma: float = 1.0,
    sign: int = -1,
    t_chunk: int = 1024,
) -> np.ndarray:
    """Direct per-point evaluation of sum a_n n^{-sigma + sign*it}.

    No phase recurrence: every point is an independent exponential, so
    there is no modulus drift (needed where integrals carry exact closed
    forms).  Summation is row-wise pairwise, fixed order.
    """
    n = np.arange(n_lo, n_lo + coeffs.size, dtype=np.float64)
    ln = np.log(n)
    base = coeffs.astype(np.complex128)
    if sigma:
        base = base * np.exp(-sigma * ln)
    out = np.empty(ts.size, dtype=np.complex128)
    for a in range(0, ts.size, t_chunk):
        chunk = ts[a : a + t_chunk]
        phases = np.exp((sign * 1j) * chunk[:, None] * ln[None, :])
        out[a : a + chunk.size] = (phases * base[None, :]).sum(axis=1)
    return out


def dpoly_eval(
    coeffs: np.ndarray,
    n_lo: int,
    t_grid: np.ndarray,
    sigma: float = 1.0,
    sign: int = -1,
    drift_tol: float = 1e-8,
    reseed: int = _RESEED,
) -> DirichletGrid:
    """Evaluate sum a_n n^{-sigma + sign*it} on a uniform grid (sign=-1: A(sigma+it)).

    Phase recurrence: each term carries z_n, rotated by e^{sign i dt log n}
    per step; z is re-seeded from direct exponentiation every `reseed`
    steps (and earlier if the drift estimate would cross drift_tol).
    """
    coeffs = np.asarray(coeffs)
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise UsageError("need a nonempty 1-d coefficient array")
    if not np.all(np.isfinite(coeffs)):
        raise UsageError("coefficients must be finite")
    if t_grid.size > 1:
        steps = np.diff(t_grid)
        dt = float(steps[0])
        if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
            raise UsageError("t_grid must be uniform")
    else:
        dt = 0.0
    n = np.arange(n_lo, n_lo + coeffs.size, dtype=np.float64)
    ln = np.log(n)
    base = coeffs.astype(np.complex128) * np.exp(-sigma * ln) if sigma else coeffs.astype(np.complex128)
    max_ln = float(ln[-1]) if ln.size else 1.0
    per_step_drift = np.finfo(np.float64).eps * (4.0 + abs(dt) * max_ln)
    if per_step_drift > drift_tol:
        raise AccuracyError(f"phase drift {per_step_drift:.2e} per step exceeds {drift_tol}")
    budget_steps = min(reseed, max(1, int(drift_tol / per_step_drift)))
    values = np.empty(t_grid.size, dtype=np.complex128)
    rot = np.exp(sign * 1j * dt * ln) if dt else None
    z = None
    since = 0
    for j, t in enumerate(t_grid):
        if z is None or since >= budget_steps:
            z = base * np.exp(sign * 1j * t * ln)
            since = 0
        values[j] = csum_array(z)
        if rot is not None:
            z = z * rot
            since += 1
    return DirichletGrid(
        n_lo=n_lo, n_hi=n_lo + coeffs.size - 1, coeffs=coeffs, t_grid=t_grid, values=values
    )


# ---------------------------------------------------------------------------
# mean values
# ---------------------------------------------------------------------------


def meanvalue_check(coeffs: np.ndarray, T: float, quad_step: float, envelope: float = 10.0) -> dict:
    """Trapezoid integral of |sum a_n n^{it}|^2 over [-T, T] against the
    diagonal + near-diagonal bound T sum|a_n|^2 + T sum_{1<=|m|<=N/T} sum |a_n a_{n+m}|.

    coeffs[0] is a_1.  The actual grid step is a power-of-two division of
    2T, so the single-coefficient case gives ratio exactly 2.
    """
    coeffs = np.asarray(coeffs)
    N = coeffs.size
    if N == 0:
        raise UsageError("empty coefficients")
    if N > 2 and quad_step > 1.0 / (4.0 * log(N)):
        raise UsageError(f"quad_step {quad_step} too coarse; need <= {1.0/(4.0*log(N)):.4g}")
    ts, dt = quad_grid(T, quad_step)
    vals = _direct_grid(coeffs, 1, ts, sigma=0.0, sign=+1)
    lhs = trapezoid(vals.real**2 + vals.imag**2, dt)
    absa = np.abs(coeffs).astype(np.float64)
    rhs = T * fsum_array(absa * absa)
    m_max = int(N / T)
    cross_parts = []
    for m in range(1, m_max + 1):
        cross_parts.append(2.0 * float(np.sum(absa[:-m] * absa[m:])))
    rhs += T * fsum_parts(cross_parts) if cross_parts else 0.0
    ratio = lhs / rhs if rhs > 0 else math.inf
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "dt": dt,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


def meanvalue_envelope(
    T: float,
    X: int,
    spec: MultiplicativeFunctionSpec,
    eps: float,
    pf: float | None = None,
    table: PrimeTable | None = None,
) -> float:
    """Scale (T H(f,X,eps)/X + 1) P_f(X)^2 bounding restricted mean values."""
    if pf is None:
        pf = mertens_product(spec, X, table)
    h_thr = h_threshold(spec, X, eps, pf=pf)
    return (T * h_thr / X + 1.0) * pf * pf


def henriot_correlation(
    spec: MultiplicativeFunctionSpec,
    x: int,
    y: int,
    K: int,
    r1: int,
    r2: int,
    table: PrimeTable | None = None,
    envelope: float = 100.0,
) -> dict:
    """Shifted correlation sums over a window against the product bound.

    lhs = sum over 0 != |k| <= K with gcd(r1,r2) | k of
    sum_{x<n<=x+y, r1|n, r2|n+k} |f(n) f(n+k)|.
    """
    if not (1 <= K <= x):
        raise UsageError("need 1 <= K <= x")
    theta = log(y) / log(x)
    r_cap = x ** (3.0 * theta / 7.0)
    if r1 > r_cap or r2 > r_cap:
        raise UsageError(f"r1, r2 must be <= x^(3 theta/7) = {r_cap:.3g}")
    if table is None:
        table = prime_table(x)
    lo_v = x + 1 - K
    absf = np.abs(values_on_range(spec, lo_v, x + y + K + 1, table)).astype(np.float64)

    def fa(ns_: np.ndarray) -> np.ndarray:
        return absf[ns_ - lo_v]

    g = math.gcd(r1, r2)
    lhs_parts = []
    first = ((x + 1) + r1 - 1) // r1 * r1
    ns = np.arange(first, x + y + 1, r1, dtype=np.int64)
    for kk in range(-K, K + 1):
        if kk == 0 or kk % g != 0:
            continue
        sel = ns[(ns + kk) % r2 == 0]
        if sel.size:
            lhs_parts.append(float(np.sum(fa(sel) * fa(sel + kk))))
    lhs = fsum_parts(lhs_parts)
    f_r1 = abs(eval_spec(spec, trial_division(r1)))
    f_r2 = abs(eval_spec(spec, trial_division(r2)))
    ps = table.upto(x).astype(np.float64)
    absfp = np.abs(np.asarray(spec.prime_values(table.upto(x)))).astype(np.float64)
    factors = 1.0 + (2.0 * absfp - 2.0) / ps
    if np.any(factors <= 0.0):
        big_product = 0.0
    else:
        big_product = math.exp(fsum_array(np.log(factors)))
    small_product = 1.0
    for p, _ in trial_division(r1 * r2).entries:
        if p > K:
            fp = abs(complex(spec.prime_power_value(p, 1)))
            small_product *= 1.0 + (1.0 - fp) / p
    rhs = K * (f_r1 * f_r2 / (r1 * r2)) * y * big_product * small_product
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


# ---------------------------------------------------------------------------
# well-spaced sets and large values
# ---------------------------------------------------------------------------


@dataclass
class WellSpacedSet:
    """Reals in [-T, T], pairwise at distance >= 1, sorted."""

    points: np.ndarray
    T: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size and (np.any(pts < -self.T) or np.any(pts > self.T)):
            raise UsageError("points must lie in [-T, T]")
        if pts.size > 1 and np.any(np.diff(pts) < 1.0):
            raise UsageError("points must be sorted with gaps >= 1")
        self.points = pts

    def __len__(self) -> int:
        return self.points.size


def discrete_meanvalue_check(
    coeffs: np.ndarray,
    wellspaced: WellSpacedSet,
    X: int,
    envelope: float = 10.0,
) -> dict:
    """sum over the set of |sum_{X<n<=2X} a_n n^{-1-it}|^2 against
    min((1+T/X) log X, (1+|set| sqrt(T)/X) log T) * (1/X) sum |a_n|^2."""
    coeffs = np.asarray(coeffs)
    if coeffs.size != X:
        raise UsageError(f"need {X} coefficients for (X, 2X]")
    ns = np.arange(X + 1, 2 * X + 1, dtype=np.int64)
    if len(wellspaced) == 0:
        lhs = 0.0
    else:
        vals = dirichlet_values(ns, coeffs, wellspaced.points)
        lhs = fsum_array(np.abs(vals) ** 2)
    T = max(wellspaced.T, 2.0)
    card = len(wellspaced)
    bound = min((1.0 + T / X) * log(X), (1.0 + card * math.sqrt(T) / X) * log(T))
    rhs = bound * fsum_array(np.abs(coeffs).astype(np.float64) ** 2) / X
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "count": card,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


def large_value_set(
    primes_window: np.ndarray,
    coeffs: np.ndarray,
    P: float,
    T: float,
    V: float,
    k: int,
    envelope: float = 10.0,
    refine_rounds: int = 3,
) -> dict:
    """Greedy well-spaced witnesses of |P(1+it)| >= 1/V on [-T, T].

    Unit-spacing scan, local 10x refinement of promising cells, greedy
    left-to-right selection, and re-verification of every kept point.  The
    count is asserted against T^(2 log V / log P) V^2 times the amplifier
    exp(2k (log T/log P) log log T), scaled by the envelope.
    """
    primes_window = np.asarray(primes_window, dtype=np.int64)
    coeffs = np.asarray(coeffs)
    if primes_window.size != coeffs.size:
        raise UsageError("primes and coefficients must align")
    if np.any(np.abs(coeffs) > k + 1e-12):
        raise UsageError("prime coefficients must satisfy |c_p| <= k")
    if V < 1:
        raise UsageError("V must be >= 1")
    thr = 1.0 / V
    t_unit = np.arange(-math.floor(T), math.floor(T) + 1, dtype=np.float64)
    vals = np.abs(dirichlet_values(primes_window, coeffs, t_unit))
    candidates = []
    for j in np.nonzero(vals >= 0.5 * thr)[0]:
        t_best = float(t_unit[j])
        step = 0.5
        for _ in range(refine_rounds):
            loc = np.clip(np.linspace(t_best - step, t_best + step, 11), -T, T)
            lv = np.abs(dirichlet_values(primes_window, coeffs, loc))
            t_best = float(loc[int(np.argmax(lv))])
            step /= 10.0
        v_best = float(np.abs(dirichlet_values(primes_window, coeffs, [t_best]))[0])
        if v_best >= thr:
            candidates.append(t_best)
    chosen: list[float] = []
    for t in sorted(candidates):
        if not chosen or t - chosen[-1] >= 1.0:
            chosen.append(t)
    for t in chosen:
        v = float(np.abs(dirichlet_values(primes_window, coeffs, [t]))[0])
        if v < thr:
            raise VerificationError(f"selected t={t} fails re-verification: {v} < {thr}")
    logT = log(max(T, 2.0))
    bound = T ** (2.0 * log(V) / log(P)) * V * V if V > 1 else V * V
    bound *= math.exp(2.0 * k * (logT / log(P)) * log(max(logT, 2.0)))
    wset = WellSpacedSet(points=np.array(chosen), T=T)
    if len(wset) > envelope * bound:
        raise VerificationError(f"{len(wset)} witnesses exceed envelope x bound = {envelope * bound}")
    return {"set": wset, "bound": bound, "count": len(wset), "threshold": thr}


# ---------------------------------------------------------------------------
# exact one-prime-factor decomposition
# ---------------------------------------------------------------------------


@dataclass
class RamareDecomposition:
    """Five-piece exact rewriting of sum a_n n^{-1-it} over (X, 2X].

    B1 is the bilinear main term (per-window prime polynomial times the
    weighted cofactor polynomial); B2/B3 are the range-sliver corrections
    near X and 2X; B4 collects the repeated-prime defects; B5 is the part
    with no prime factor in [P, Q].  lhs - (B1+..+B5) must vanish to
    rounding at every grid point.
    """

    t_values: np.ndarray
    lhs: np.ndarray
    pieces: dict
    residuals: np.ndarray
    tolerance_scale: float
    restriction_used: str
    params: dict

    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def _interval_ints(lo: float, hi: float) -> tuple[int, int]:
    """Integers in the real interval (lo, hi] as an inclusive [a, b] range."""
    return math.floor(lo) + 1, math.floor(hi)


def _diff_ranges(a1: int, b1: int, a2: int, b2: int) -> list[tuple[int, int]]:
    """Integer ranges forming [a1,b1] minus [a2,b2] (each inclusive)."""
    out = []
    lo_part = (a1, min(b1, a2 - 1))
    if lo_part[0] <= lo_part[1]:
        out.append(lo_part)
    hi_part = (max(a1, b2 + 1), b1)
    if hi_part[0] <= hi_part[1]:
        out.append(hi_part)
    return out


def ramare_decompose(
    spec: MultiplicativeFunctionSpec,
    X: int,
    P: float,
    Q: float,
    H: float,
    t_values,
    eps: float = 0.5,
    restriction: str = "auto",
    params: RestrictionParams | None = None,
    table: PrimeTable | None = None,
    tolerance: float = 1e-9,
) -> RamareDecomposition:
    """Decompose the restricted coefficient sum by isolating one prime in [P, Q].

    Coefficients: a_n = f(n) 1_S(n) on (X, 2X]; b_m = f(m) 1_{S'}(m) with the
    budget lowered by one; c_p = f(p).  The restriction S defaults to the
    anchored set intersected with the omega budget at eps/2; if [P, Q]
    partially overlaps an anchor window (so no single b_m works), "auto"
    falls back to the budget-only restriction and records it.
    """
    if not (2 <= P <= Q):
        raise UsageError("need 2 <= P <= Q")
    if H < 1:
        raise UsageError("need H >= 1")
    if X < 16:
        raise UsageError("X must be >= 16")
    t_values = np.asarray(t_values, dtype=np.float64)
    hi_n = math.floor(2 * X * math.exp(1.0 / H)) + 1
    if table is None:
        table = prime_table(max(isqrt(hi_n), int(Q), int(2 * X)))
    if params is None:
        params = default_params(X, k=max(spec.bound_k, 2), eps=eps)

    def window_relation(win):
        lo, hi = win
        if Q < lo or P > hi:
            return "disjoint"
        if lo <= P and Q <= hi:
            return "inside"
        return "partial"

    relations = [window_relation(w) for w in params.windows()]
    if restriction == "auto":
        restriction_used = "anchored+budget" if "partial" not in relations else "budget"
    elif restriction == "AB":
        if "partial" in relations:
            raise UsageError(
                f"[P,Q]=({P},{Q}) partially overlaps anchor windows {params.windows()}; "
                "no single cofactor restriction exists"
            )
        restriction_used = "anchored+budget"
    elif restriction in ("B", "budget"):
        restriction_used = "budget"
    elif restriction == "none":
        restriction_used = "none"
    else:
        raise UsageError(f"unknown restriction {restriction!r}")

    # per-n data over [1, hi_n)
    fvals = values_on_range(spec, 1, hi_n, table).astype(np.complex128)
    om_ch = BigOmegaChannel()
    w_ch = WindowCountChannel(P, Q)
    r_ch = WindowSquareChannel(P, Q)
    chans: list = [om_ch, w_ch, r_ch]
    mask_chans = []
    if restriction_used == "anchored+budget":
        mask_chans = [WindowMaskChannel(*win) for win in params.windows()]
        chans.extend(mask_chans)
    scan_range(1, hi_n, table, chans)
    omega_all = om_ch.values.astype(np.float64)
    w_pq = w_ch.values.astype(np.int64)
    r_pq = r_ch.values.astype(np.int64)

    if restriction_used == "none":
        a_keep = np.ones(hi_n - 1, dtype=bool)
        b_keep = np.ones(hi_n - 1, dtype=bool)
    else:
        pf = mertens_product(spec, X, table)
        budget = omega_budget(eps / 2.0, pf, X)
        a_keep = omega_all <= budget
        b_keep = omega_all <= budget - 1.0
        # every anchor condition applies to a_n; for the cofactors, windows
        # containing [P, Q] are satisfied by the isolated prime and drop out
        for mc, rel in zip(mask_chans, relations):
            a_keep &= mc.values
            if rel == "disjoint":
                b_keep &= mc.values

    a_coeff = np.zeros(hi_n - 1, dtype=np.complex128)
    rng_a = np.arange(X + 1, 2 * X + 1)
    a_coeff[rng_a - 1] = fvals[rng_a - 1] * a_keep[rng_a - 1]
    b_coeff = fvals * b_keep
    weight = 1.0 / (w_pq.astype(np.float64) + 1.0)
    bw = b_coeff * weight

    ps_window = table.in_window(P, Q)
    c_p = np.asarray(spec.prime_values(ps_window)).astype(np.complex128)
    v_of_p = np.floor(H * np.log(ps_window.astype(np.float64))).astype(np.int64)

    # piece assembly: (n values, coefficient) pairs per piece
    pieces_nc: dict[str, tuple[list, list]] = {
        name: ([], []) for name in ("B1", "B2", "B3", "B4", "B5")
    }

    def add(piece, ns, cs):
        pieces_nc[piece][0].append(np.asarray(ns, dtype=np.float64))
        pieces_nc[piece][1].append(np.asarray(cs, dtype=np.complex128))

    # B1 per window v: Q_v x R_v assembled per t later; store component arrays
    b1_components = []
    for v in np.unique(v_of_p):
        sel = v_of_p == v
        pv = ps_window[sel]
        cv = c_p[sel]
        a_v = X * math.exp(-float(v) / H)
        b_v = 2 * X * math.exp(-float(v) / H)
        m_lo, m_hi = _interval_ints(a_v, b_v)
        m_lo = max(m_lo, 1)
        m_hi = min(m_hi, hi_n - 1)
        ms = np.arange(m_lo, m_hi + 1, dtype=np.int64)
        b1_components.append(
            (pv.astype(np.float64), cv, ms.astype(np.float64), bw[ms - 1], int(v))
        )
        # sliver corrections vs the true range (X/p, 2X/p] for each p in the window
        for p, cp in zip(pv, cv):
            t_lo, t_hi = math.floor(X / p) + 1, math.floor(2 * X / p)
            for a, b in _diff_ranges(t_lo, t_hi, m_lo, m_hi):
                mm = np.arange(a, b + 1, dtype=np.int64)
                add("B2", mm * p, cp * bw[mm - 1])
            for a, b in _diff_ranges(m_lo, m_hi, t_lo, t_hi):
                mm = np.arange(a, b + 1, dtype=np.int64)
                add("B3", mm * p, -cp * bw[mm - 1])

    # B4: repeated-prime defects.  For p | m: +a_{mp} w_m - c_p b_m w_m; plus the
    # within-range correction a_n r(n)/(w(n)(w(n)+1)).
    for p, cp in zip(ps_window, c_p):
        t_lo, t_hi = math.floor(X / p) + 1, math.floor(2 * X / p)
        first = ((t_lo + int(p) - 1) // int(p)) * int(p)
        if first > t_hi:
            continue
        mm = np.arange(first, t_hi + 1, int(p), dtype=np.int64)
        wm = weight[mm - 1]
        add("B4", mm * int(p), a_coeff[mm * int(p) - 1] * wm)
        add("B4", mm * int(p), -cp * bw[mm - 1])
    in_range = np.arange(X + 1, 2 * X + 1, dtype=np.int64)
    has_sq = r_pq[in_range - 1] > 0
    nr = in_range[has_sq]
    if nr.size:
        w_n = w_pq[nr - 1].astype(np.float64)
        r_n = r_pq[nr - 1].astype(np.float64)
        add("B4", nr, a_coeff[nr - 1] * r_n / (w_n * (w_n + 1.0)))

    # B5: no prime factor in [P, Q]
    rough = w_pq[in_range - 1] == 0
    nrough = in_range[rough]
    add("B5", nrough, a_coeff[nrough - 1])

    # evaluate everything on the grid
    def eval_piece(ns_list, cs_list):
        out = np.zeros(t_values.size, dtype=np.complex128)
        if not ns_list:
            return out
        ns = np.concatenate(ns_list)
        cs = np.concatenate(cs_list)
        ln = np.log(ns)
        base = cs / ns
        for j, t in enumerate(t_values):
            out[j] = csum_array(base * np.exp(-1j * t * ln))
        return out

    piece_vals = {}
    for name in ("B2", "B3", "B4", "B5"):
        piece_vals[name] = eval_piece(*pieces_nc[name])
    b1 = np.zeros(t_values.size, dtype=np.complex128)
    for pv, cv, ms, bwv, _v in b1_components:
        lnp = np.log(pv)
        lnm = np.log(ms)
        qb = cv / pv
        rb = bwv / ms
        for j, t in enumerate(t_values):
            qv = csum_array(qb * np.exp(-1j * t * lnp))
            rv = csum_array(rb * np.exp(-1j * t * lnm))
            b1[j] += qv * rv
    piece_vals["B1"] = b1

    lhs_ns = in_range.astype(np.float64)
    lhs_cs = a_coeff[in_range - 1]
    lhs = eval_piece([lhs_ns], [lhs_cs])
    total = sum(piece_vals.values())
    residuals = np.abs(lhs - total)
    scale = 1.0 + fsum_array(np.abs(lhs_cs) / lhs_ns)
    result = RamareDecomposition(
        t_values=t_values,
        lhs=lhs,
        pieces=piece_vals,
        residuals=residuals,
        tolerance_scale=scale,
        restriction_used=restriction_used,
        params={"X": X, "P": P, "Q": Q, "H": H, "eps": eps},
    )
    if result.max_residual() > tolerance * scale:
        raise VerificationError(
            f"decomposition residual {result.max_residual():.3e} exceeds "
            f"{tolerance:.1e} * {scale:.3e}"
        )
    return result


# ---------------------------------------------------------------------------
# rough-restricted sums and amplification
# ---------------------------------------------------------------------------


def rough_restricted_sum(
    spec: MultiplicativeFunctionSpec,
    X: int,
    P: float,
    Q: float,
    t0: float,
    t_grid,
    alpha: float = 1.0,
    rho: float | None = None,
    sigma0: float = 0.5,
    envelope: float = 10.0,
    table: PrimeTable | None = None,
) -> dict:
    """Coefficient sums over (X, 2X] restricted to [P,Q]-rough integers, and
    the same sums weighted by 1/(count of [P,Q]-prime divisors + 1).

    Supremum rows over the grid are compared against the stated decay
    bounds (recorded with envelopes; implied constants unknown).  Q < P is
    allowed: the weight collapses to 1 and the rough mask is everything.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if table is None:
        table = prime_table(max(isqrt(2 * X), int(min(Q, 2 * X)), 3))
    fvals = values_on_range(spec, X + 1, 2 * X + 1, table).astype(np.complex128)
    w_ch = WindowCountChannel(P, Q)
    scan_range(X + 1, 2 * X + 1, table, [w_ch])
    w_pq = w_ch.values.astype(np.float64)
    ns = np.arange(X + 1, 2 * X + 1, dtype=np.float64)
    ln = np.log(ns)
    rough_coeff = np.where(w_pq == 0, fvals, 0.0) / ns
    weighted_coeff = fvals / (w_pq + 1.0) / ns
    sums = np.empty(t_grid.size, dtype=np.complex128)
    r_values = np.empty(t_grid.size, dtype=np.complex128)
    for j, t in enumerate(t_grid):
        phase = np.exp(-1j * (t0 + t) * ln)
        sums[j] = csum_array(rough_coeff * phase)
        r_values[j] = csum_array(weighted_coeff * phase)
    k = spec.bound_k
    pf = mertens_product(spec, X, prime_table(X))
    if rho is None:
        from .restrict import rho_sigma

        rho = 0.5 * rho_sigma(k, alpha)["rho"]
    lq_lp = log(max(Q, 4.0)) / log(max(P, 2.0))
    rows = []
    pos = np.abs(t_grid) > 0
    if np.any(pos):
        Z = float(np.min(np.abs(t_grid[pos])))
        sup_rough = float(np.max(np.abs(sums[pos])))
        bound = (Z**-0.5 + lq_lp ** (2 * k) * log(log(X)) / log(X) ** rho) * pf
        rows.append(
            {
                "name": "rough-sup",
                "Z": Z,
                "sup": sup_rough,
                "bound": bound,
                "ratio": sup_rough / bound,
                "envelope": envelope,
            }
        )
    far = np.abs(t_grid) >= log(X) ** sigma0
    if np.any(far):
        sup_r = float(np.max(np.abs(r_values[far])))
        bound33 = (
            lq_lp**k
            * (log(X) ** (-sigma0 / 2.0) + lq_lp ** (2 * k) * log(log(X)) / log(X) ** rho)
            * pf
        )
        rows.append(
            {
                "name": "weighted-sup",
                "t_min": float(log(X) ** sigma0),
                "sup": sup_r,
                "bound": bound33,
                "ratio": sup_r / bound33,
                "envelope": envelope,
            }
        )
    return {"t": t_grid, "sums": sums, "R_values": r_values, "rows": rows, "pf": pf, "rho": rho}


def amplified_meanvalue(
    spec: MultiplicativeFunctionSpec,
    Y1: int,
    Y2: int,
    X: int,
    T: float,
    quad_step: float | None = None,
    eps: float = 0.5,
    l: int | None = None,
    envelope: float = 100.0,
    table: PrimeTable | None = None,
) -> dict:
    """Trapezoid integral of |Q(1+it)^l A(1+it)|^2 against the amplified
    mean-value scale, l = ceil(log Y2 / log Y1).

    l = 0 (Y2 <= Y1) delegates to meanvalue_check on A alone, bit for bit.
    """
    if l is None:
        l = max(0, math.ceil(log(Y2) / log(Y1))) if Y2 > Y1 else 0
    if l > 20:
        raise UsageError("l > 20 would overflow the factorial amplifier")
    n_lo = X // Y2 + 1
    n_hi = 2 * X // Y2
    if table is None:
        table = prime_table(max(isqrt(n_hi), 2 * Y1, 3))
    pf = mertens_product(spec, X, prime_table(X))
    budget = omega_budget(eps, pf, X)
    om = BigOmegaChannel()
    scan_range(n_lo, n_hi + 1, table, [om])
    fvals = values_on_range(spec, n_lo, n_hi + 1, table).astype(np.complex128)
    a_m = np.where(om.values <= budget, fvals, 0.0)
    if quad_step is None:
        quad_step = 1.0 / (4.0 * log(2 * X))
    if l == 0:
        ms = np.arange(n_lo, n_hi + 1, dtype=np.float64)
        padded = np.zeros(n_hi, dtype=np.complex128)
        padded[n_lo - 1 :] = a_m / ms
        return meanvalue_check(padded, T, quad_step, envelope=envelope)
    ps = table.in_window(Y1 + 1, 2 * Y1)
    c_p = np.asarray(spec.prime_values(ps)).astype(np.complex128)
    k = spec.bound_k
    if np.any(np.abs(c_p) > k + 1e-12):
        raise UsageError("prime coefficients exceed the declared bound k")
    ts, dt = quad_grid(T, quad_step)
    q_grid = dirichlet_values(ps, c_p, ts)
    a_grid = _direct_grid(a_m, n_lo, ts)
    integrand = np.abs(q_grid**l * a_grid) ** 2
    lhs = trapezoid(integrand, dt)
    scale = meanvalue_envelope(T, X, spec, eps, pf=pf, table=prime_table(X))
    rhs = scale * float(k) ** (2 * l) * math.factorial(l + 1) ** 2
    ratio = lhs / rhs if rhs > 0 else math.inf
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ratio": ratio,
        "l": l,
        "dt": dt,
        "envelope": envelope,
        "within_envelope": ratio <= envelope,
    }


def perron_window_check(
    spec: MultiplicativeFunctionSpec,
    x: float,
    h: float,
    t_max: float,
    quad_step: float | None = None,
    table: PrimeTable | None = None,
) -> dict:
    """Truncated contour reconstruction of the window sum.

    approx = (1/2 pi) integral over [-t_max, t_max] of A_f(1+it) times
    ((x+h)^{1+it} - x^{1+it})/(1+it); exact = direct sum over (x, x+h].
    x and x+h must be non-integers (use half-integer offsets).
    """
    if x <= 1 or h <= 0:
        raise UsageError("need x > 1 and h > 0")
    if float(x).is_integer() or float(x + h).is_integer():
        raise UsageError("x and x+h must not be integers (offset by 1/2)")
    max_step = 1.0 / (4.0 * log(2 * x))
    if quad_step is None:
        quad_step = max_step
    if quad_step > max_step:
        raise UsageError(f"quad_step {quad_step} too coarse; need <= {max_step:.4g}")
    n_lo = math.floor(x) + 1
    n_hi = math.floor(2 * x)
    if table is None:
        table = prime_table(isqrt(n_hi))
    fvals = values_on_range(spec, n_lo, n_hi + 1, table).astype(np.complex128)
    ts, dt = quad_grid(t_max, quad_step)
    avals = _direct_grid(fvals, n_lo, ts)
    s = 1.0 + 1j * ts
    kernel = (np.exp(s * math.log(x + h)) - np.exp(s * math.log(x))) / s
    integrand = avals * kernel
    re = trapezoid(integrand.real, dt)
    im = trapezoid(integrand.imag, dt)
    approx = complex(re, im) / (2.0 * math.pi)
    w_lo = math.floor(x) + 1
    w_hi = math.floor(x + h)
    exact = complex(csum_array(fvals[w_lo - n_lo : w_hi - n_lo + 1])) if w_hi >= w_lo else 0j
    return {
        "approx": approx,
        "exact": exact,
        "error": abs(approx - exact),
        "t_max": t_max,
        "dt": dt,
    }
