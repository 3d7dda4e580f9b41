"""Divisor-bounded multiplicative functions as prime-power rules.

A spec is a rule (p, a) -> f(p^a) plus a declared divisor bound k.  The
registry covers the standard families; custom rules load from a small
text format.  This module also owns the pretentious-distance machinery:
Mertens products, window-length thresholds, the distance profile and its
minimizer, and Euler-product diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, isqrt, log

import numpy as np

from .errors import AccuracyError, CapacityError, DomainError, EvaluationError, UsageError
from .numutil import csum_array, fsum_array
from .primes import PrimeTable, prime_table
from .sieve import Channel, FactorVector, dk_array, scan_range

_INT64_SAFE = 1 << 62


class MultiplicativeFunctionSpec:
    """Base class: a multiplicative function given by prime-power values.

    f(1) = 1 implicitly; eval on a factorization is the product of rule
    values.  `bound_k` declares |f(n)| <= d_k(n); the declaration is
    audited by check_dk_bounded, never assumed.
    """

    name: str = "base"
    bound_k: int = 1
    real_flag: bool | None = None  # declared almost-real-valued
    value_kind: str = "complex"  # "int", "real", or "complex"

    def prime_power_value(self, p: int, a: int) -> complex:
        raise NotImplementedError

    def prime_values(self, ps: np.ndarray) -> np.ndarray:
        """Vectorized f(p) over an array of primes."""
        if ps.size > (1 << 20):
            raise CapacityError(f"{self.name}: no vectorized prime rule for {ps.size} primes")
        return np.array([self.prime_power_value(int(p), 1) for p in ps], dtype=self._dtype())

    def prime_power_values(self, ps: np.ndarray, a: int) -> np.ndarray:
        """Vectorized f(p^a) over an array of primes, fixed exponent."""
        if ps.size > (1 << 20):
            raise CapacityError(f"{self.name}: no vectorized prime-power rule for {ps.size} primes")
        return np.array([self.prime_power_value(int(p), a) for p in ps], dtype=self._dtype())

    def _dtype(self):
        return {"int": np.int64, "real": np.float64, "complex": np.complex128}[self.value_kind]

    def int_overflow_possible(self, hi: int) -> bool:
        k = max(self.bound_k, 2)
        return math.log2(max(hi, 2)) * math.log2(k) >= 61

    def describe(self) -> dict:
        return {
            "name": self.name,
            "bound_k": self.bound_k,
            "real": self.real_flag,
            "kind": self.value_kind,
        }


class DivisorPowerSpec(MultiplicativeFunctionSpec):
    """f = d_k: the k-fold divisor function."""

    def __init__(self, k: int):
        if k < 1:
            raise UsageError("k must be >= 1")
        self.k = k
        self.name = f"dk:{k}"
        self.bound_k = k
        self.real_flag = True
        self.value_kind = "int"

    def prime_power_value(self, p, a):
        return comb(a + self.k - 1, self.k - 1)

    def prime_values(self, ps):
        return np.full(ps.size, self.k, dtype=np.int64)

    def prime_power_values(self, ps, a):
        return np.full(ps.size, comb(a + self.k - 1, self.k - 1), dtype=np.int64)


class OmegaPowerSpec(MultiplicativeFunctionSpec):
    """f(n) = k^Omega(n), as the prime-power rule (p, a) -> k^a."""

    def __init__(self, k: int):
        if k < 1:
            raise UsageError("k must be >= 1")
        self.k = k
        self.name = f"omega_pow:{k}"
        self.bound_k = k
        self.real_flag = True
        self.value_kind = "int"

    def prime_power_value(self, p, a):
        return self.k**a

    def prime_values(self, ps):
        return np.full(ps.size, self.k, dtype=np.int64)

    def prime_power_values(self, ps, a):
        return np.full(ps.size, self.k**a, dtype=np.int64)


class RoughSpec(MultiplicativeFunctionSpec):
    """d_k with f(p^a) = 0 whenever p lies in [win_lo, win_hi]."""

    def __init__(self, k: int, win_lo: float, win_hi: float):
        if k < 1:
            raise UsageError("k must be >= 1")
        self.k = k
        self.win = (float(win_lo), float(win_hi))
        self.name = f"rough:{k}:{win_lo:g}:{win_hi:g}"
        self.bound_k = k
        self.real_flag = True
        self.value_kind = "int"

    def prime_power_value(self, p, a):
        if self.win[0] <= p <= self.win[1]:
            return 0
        return comb(a + self.k - 1, self.k - 1)

    def prime_values(self, ps):
        out = np.full(ps.size, self.k, dtype=np.int64)
        out[(ps >= self.win[0]) & (ps <= self.win[1])] = 0
        return out

    def prime_power_values(self, ps, a):
        out = np.full(ps.size, comb(a + self.k - 1, self.k - 1), dtype=np.int64)
        out[(ps >= self.win[0]) & (ps <= self.win[1])] = 0
        return out


class TwistedSpec(MultiplicativeFunctionSpec):
    """g(n) = f(n) * n^{i tau} for a base spec f."""

    def __init__(self, base: MultiplicativeFunctionSpec, tau: float):
        self.base = base
        self.tau = float(tau)
        self.name = f"{base.name}*n^({tau:g}i)"
        self.bound_k = base.bound_k
        self.real_flag = False if tau != 0 else base.real_flag
        self.value_kind = "complex" if tau != 0 else base.value_kind

    def prime_power_value(self, p, a):
        return self.base.prime_power_value(p, a) * complex(p) ** complex(0, a * self.tau)

    def prime_values(self, ps):
        phase = np.exp(1j * self.tau * np.log(ps.astype(np.float64)))
        return self.base.prime_values(ps).astype(np.complex128) * phase

    def prime_power_values(self, ps, a):
        phase = np.exp(1j * a * self.tau * np.log(ps.astype(np.float64)))
        return self.base.prime_power_values(ps, a).astype(np.complex128) * phase


@dataclass
class _Rule:
    kind: str  # "any", "le", "lt", "ge", "gt", "eq", "range"
    args: tuple
    a_cond: int | None  # None = any exponent
    value: complex

    def match_scalar(self, p: int, a: int) -> bool:
        if self.a_cond is not None and a != self.a_cond:
            return False
        k, g = self.kind, self.args
        if k == "any":
            return True
        if k == "le":
            return p <= g[0]
        if k == "lt":
            return p < g[0]
        if k == "ge":
            return p >= g[0]
        if k == "gt":
            return p > g[0]
        if k == "eq":
            return p == g[0]
        return g[0] <= p <= g[1]

    def match_array(self, ps: np.ndarray, a: int) -> np.ndarray:
        if self.a_cond is not None and a != self.a_cond:
            return np.zeros(ps.size, dtype=bool)
        k, g = self.kind, self.args
        if k == "any":
            return np.ones(ps.size, dtype=bool)
        if k == "le":
            return ps <= g[0]
        if k == "lt":
            return ps < g[0]
        if k == "ge":
            return ps >= g[0]
        if k == "gt":
            return ps > g[0]
        if k == "eq":
            return ps == g[0]
        return (ps >= g[0]) & (ps <= g[1])


class RuleTableSpec(MultiplicativeFunctionSpec):
    """Custom prime-power rules from text; first matching line wins."""

    def __init__(self, rules: list[_Rule], k: int, name: str = "custom", real: bool | None = None):
        if not rules or rules[-1].kind != "any" or rules[-1].a_cond is not None:
            raise UsageError("rule table must end with a catch-all line '* * re im'")
        self.rules = rules
        self.name = name
        self.bound_k = k
        self.real_flag = real
        all_real = all(abs(r.value.imag) == 0 for r in rules)
        self.value_kind = "real" if all_real else "complex"

    def prime_power_value(self, p, a):
        for r in self.rules:
            if r.match_scalar(p, a):
                return r.value.real if self.value_kind == "real" else r.value
        raise UsageError("unreachable: missing catch-all rule")

    def prime_values(self, ps):
        return self.prime_power_values(ps, 1)

    def prime_power_values(self, ps, a):
        out = np.empty(ps.size, dtype=self._dtype())
        unset = np.ones(ps.size, dtype=bool)
        for r in self.rules:
            m = r.match_array(ps, a) & unset
            if m.any():
                out[m] = r.value if self.value_kind == "complex" else r.value.real
                unset &= ~m
            if not unset.any():
                break
        return out


def parse_rule_text(text: str, name: str = "custom") -> RuleTableSpec:
    """Parse the custom rule format.

    Header lines: 'k <int>', 'name <str>', 'real <0|1>'.  Rule lines:
    '<p_condition> <a> <re> <im>' with p_condition one of '*', 'p<=N',
    'p<N', 'p>=N', 'p>N', 'N..M', or a literal prime N; 'a' is '*' or an
    integer.  A catch-all '* * re im' line is required last.
    """
    k = None
    real: bool | None = None
    rules: list[_Rule] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "k" and len(parts) == 2:
            k = int(parts[1])
            continue
        if parts[0] == "name" and len(parts) == 2:
            name = parts[1]
            continue
        if parts[0] == "real" and len(parts) == 2:
            real = bool(int(parts[1]))
            continue
        if len(parts) != 4:
            raise UsageError(f"rule line {lineno}: expected 'p_condition a re im'")
        cond, a_s, re_s, im_s = parts
        if cond == "*":
            kind, args = "any", ()
        elif cond.startswith("p<="):
            kind, args = "le", (int(cond[3:]),)
        elif cond.startswith("p>="):
            kind, args = "ge", (int(cond[3:]),)
        elif cond.startswith("p<"):
            kind, args = "lt", (int(cond[2:]),)
        elif cond.startswith("p>"):
            kind, args = "gt", (int(cond[2:]),)
        elif ".." in cond:
            lo, hi = cond.split("..", 1)
            kind, args = "range", (int(lo), int(hi))
        else:
            kind, args = "eq", (int(cond),)
        a_cond = None if a_s == "*" else int(a_s)
        value = complex(float(re_s), float(im_s))
        rules.append(_Rule(kind, args, a_cond, value))
    if k is None:
        raise UsageError("rule text must declare 'k <int>'")
    return RuleTableSpec(rules, k=k, name=name, real=real)


def get_spec(name: str) -> MultiplicativeFunctionSpec:
    """Resolve a registry name: dk:k, dk_twist:k:t1, omega_pow:k, rough:k:P:Q, file:PATH."""
    parts = name.split(":")
    try:
        if parts[0] == "dk" and len(parts) == 2:
            return DivisorPowerSpec(int(parts[1]))
        if parts[0] == "dk_twist" and len(parts) == 3:
            return TwistedSpec(DivisorPowerSpec(int(parts[1])), float(parts[2]))
        if parts[0] == "omega_pow" and len(parts) == 2:
            return OmegaPowerSpec(int(parts[1]))
        if parts[0] == "rough" and len(parts) == 4:
            return RoughSpec(int(parts[1]), float(parts[2]), float(parts[3]))
        if parts[0] == "file" and len(parts) >= 2:
            path = name.split(":", 1)[1]
            with open(path, "r", encoding="utf-8") as fh:
                return parse_rule_text(fh.read())
    except (ValueError, OSError) as exc:
        raise UsageError(f"bad spec name {name!r}: {exc}") from exc
    raise UsageError(f"unknown spec name {name!r}")


REGISTRY_FORMS = ("dk:k", "dk_twist:k:t1", "omega_pow:k", "rough:k:P:Q", "file:PATH")


def eval_spec(spec: MultiplicativeFunctionSpec, fv: FactorVector) -> complex:
    """f(n) = product of rule values over the factorization; empty product = 1."""
    out = complex(1.0)
    for p, a in fv.entries:
        v = complex(spec.prime_power_value(p, a))
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise EvaluationError(f"{spec.name}({p}^{a}) is not finite")
        out *= v
    return out


class SpecValueChannel(Channel):
    """Sieve channel producing f(n) over a segment."""

    def __init__(self, spec: MultiplicativeFunctionSpec):
        self.spec = spec

    def start(self, lo, hi):
        kind = self.spec.value_kind
        if kind == "int":
            self.values = np.ones(hi - lo, dtype=np.int64)
            self._guard = self.spec.int_overflow_possible(hi)
            if self._guard:
                self._shadow = np.ones(hi - lo, dtype=np.float64)
        else:
            self.values = np.ones(hi - lo, dtype=np.float64 if kind == "real" else np.complex128)
            self._guard = False

    def prime(self, p, idx, e):
        emax = int(e.max())
        tab = np.array(
            [self.spec.prime_power_value(p, a) for a in range(1, emax + 1)],
            dtype=self.values.dtype,
        )
        mult = tab[e - 1]
        self.values[idx] *= mult
        if self._guard:
            self._shadow[idx] *= np.abs(mult).astype(np.float64)

    def leftover(self, idx, primes_left):
        vals = self.spec.prime_values(primes_left).astype(self.values.dtype)
        self.values[idx] *= vals
        if self._guard:
            self._shadow[idx] *= np.abs(vals)
            if float(self._shadow.max(initial=0.0)) >= float(_INT64_SAFE):
                raise OverflowError(f"{self.spec.name} exceeds int64 in this segment")


def values_on_range(
    spec: MultiplicativeFunctionSpec, lo: int, hi: int, table: PrimeTable | None = None
) -> np.ndarray:
    """f(n) for n in [lo, hi), vectorized through the sieve kernel."""
    if table is None:
        table = prime_table(isqrt(hi - 1))
    if isinstance(spec, TwistedSpec) and spec.tau != 0:
        base = values_on_range(spec.base, lo, hi, table)
        n = np.arange(lo, hi, dtype=np.float64)
        return base.astype(np.complex128) * np.exp(1j * spec.tau * np.log(n))
    ch = SpecValueChannel(spec)
    scan_range(lo, hi, table, [ch])
    return ch.values


def check_dk_bounded(
    spec: MultiplicativeFunctionSpec,
    lo: int,
    hi: int,
    table: PrimeTable | None = None,
    rel_tol: float = 1e-12,
    max_report: int = 50,
) -> dict:
    """Report n in [lo, hi) with |f(n)| > d_k(n); report-style, never raises."""
    if table is None:
        table = prime_table(isqrt(hi - 1))
    fabs = np.abs(values_on_range(spec, lo, hi, table)).astype(np.float64)
    dk = dk_array(lo, hi, spec.bound_k, table).astype(np.float64)
    bad = fabs > dk * (1.0 + rel_tol) + rel_tol
    idx = np.nonzero(bad)[0]
    rows = [
        {"n": int(lo + i), "abs_f": float(fabs[i]), "dk": float(dk[i])} for i in idx[:max_report]
    ]
    return {"checked": [lo, hi], "violations": int(idx.size), "examples": rows}


# ---------------------------------------------------------------------------
# prime sums, Mertens products, thresholds
# ---------------------------------------------------------------------------


def _prime_data(spec, X, table=None):
    if table is None:
        table = prime_table(X)
    ps = table.upto(X)
    fp = spec.prime_values(ps)
    return ps.astype(np.float64), np.asarray(fp)


def nonvanishing_audit(
    spec: MultiplicativeFunctionSpec,
    alpha: float,
    delta_limit: float,
    wz_pairs: list[tuple[float, float]] | None = None,
    table: PrimeTable | None = None,
) -> dict:
    """Worst margin of the averaged prime-value lower bound on [2, delta_limit].

    For each pair (w, z): (sum_{w<p<=z} |f(p)|/p - k*alpha*sum 1/p) * log w.
    Large negative margins flag failure for every bounded implied constant.
    """
    if wz_pairs is None:
        ladder = [2.0]
        while ladder[-1] * 2 <= delta_limit:
            ladder.append(ladder[-1] * 2)
        if ladder[-1] < delta_limit:
            ladder.append(float(delta_limit))
        wz_pairs = [(w, z) for i, w in enumerate(ladder) for z in ladder[i + 1 :]]
    if not wz_pairs:
        raise UsageError("empty (w, z) grid")
    ps, fp = _prime_data(spec, int(delta_limit), table)
    absf = np.abs(fp).astype(np.float64)
    inv = 1.0 / ps
    pref_f = np.concatenate(([0.0], np.cumsum(absf * inv)))
    pref_1 = np.concatenate(([0.0], np.cumsum(inv)))
    k = spec.bound_k
    rows = []
    worst = math.inf
    for w, z in wz_pairs:
        if not (2 <= w <= z <= delta_limit):
            raise UsageError(f"bad pair ({w}, {z}); need 2 <= w <= z <= {delta_limit}")
        a = int(np.searchsorted(ps, w, side="right"))
        b = int(np.searchsorted(ps, z, side="right"))
        margin = float((pref_f[b] - pref_f[a]) - k * alpha * (pref_1[b] - pref_1[a])) * log(w)
        rows.append({"w": w, "z": z, "margin": margin})
        worst = min(worst, margin)
    return {"worst_margin": worst, "pairs": rows, "k": k, "alpha": alpha}


def mertens_product(
    spec: MultiplicativeFunctionSpec, x: float, table: PrimeTable | None = None
) -> float:
    """P_f(x) = prod_{p<=x} (1 + (|f(p)|-1)/p), accumulated in log space."""
    if x < 2:
        return 1.0
    ps, fp = _prime_data(spec, int(x), table)
    absf = np.abs(fp).astype(np.float64)
    ratio = (absf - 1.0) / ps
    if np.any(1.0 + ratio <= 0.0):
        raise DomainError("Mertens factor <= 0; |f(p)| < 1 - p is impossible for d_k-bounded f")
    return math.exp(fsum_array(np.log1p(ratio)))


def h_threshold(
    spec: MultiplicativeFunctionSpec,
    X: float,
    eps: float,
    pf: float | None = None,
    table: PrimeTable | None = None,
) -> float:
    """Window-length threshold (P_f(X) log X)^((1+eps) log k) / P_f(X)."""
    if X <= math.e:
        raise DomainError("X must exceed e")
    if pf is None:
        pf = mertens_product(spec, X, table)
    k = spec.bound_k
    return (pf * log(X)) ** ((1.0 + eps) * log(k)) / pf


# ---------------------------------------------------------------------------
# pretentious distance
# ---------------------------------------------------------------------------


@dataclass
class DistanceProfile:
    """Grid of squared distances to n^{it} with the located minimizer."""

    t_grid: np.ndarray
    d2_values: np.ndarray
    t0: float
    X: int
    d2_at_t0: float
    reason: str = "search"
    boundary_attained: bool = False
    ties: list[float] = field(default_factory=list)
    final_step: float = 0.0


def _distance_grid(ps, absf, re_f, im_f, t_grid):
    """Squared distance at each grid t; summands clamped at 0."""
    inv = 1.0 / ps
    lp = np.log(ps)
    out = np.empty(len(t_grid), dtype=np.float64)
    for j, t in enumerate(t_grid):
        c = np.cos(t * lp)
        s = np.sin(t * lp)
        summand = (absf - (re_f * c + im_f * s)) * inv
        np.maximum(summand, 0.0, out=summand)
        out[j] = fsum_array(summand)
    return out


def distance_profile_values(spec, X, t_grid, table=None) -> np.ndarray:
    """D(f, n^{it}; X)^2 on an arbitrary grid of t values."""
    ps, fp = _prime_data(spec, X, table)
    absf = np.abs(fp).astype(np.float64)
    re_f = fp.real.astype(np.float64)
    im_f = fp.imag.astype(np.float64) if np.iscomplexobj(fp) else np.zeros_like(absf)
    return _distance_grid(ps, absf, re_f, im_f, np.asarray(t_grid, dtype=np.float64))


def halasz_distance_sq(spec, t: float, X: int, table: PrimeTable | None = None) -> float:
    """Squared pretentious distance between f and n^{it} over p <= X."""
    return float(distance_profile_values(spec, X, [t], table)[0])


def nonreal_prime_mass(spec, X, table=None, im_tol: float = 1e-15) -> float:
    """Finite proxy for almost-real-valuedness: sum |f(p)|/p over non-real f(p)."""
    ps, fp = _prime_data(spec, X, table)
    if not np.iscomplexobj(fp):
        return 0.0
    nonreal = np.abs(fp.imag) > im_tol * (np.abs(fp) + 1.0)
    return fsum_array(np.where(nonreal, np.abs(fp) / ps, 0.0))


def find_t0(
    spec,
    X: int,
    window: tuple[float, float] | None = None,
    coarse_step: float | None = None,
    refine_rounds: int = 3,
    refine_factor: int = 10,
    real_threshold: float = 1e-6,
    real_override: bool | None = None,
    max_points: int = 1 << 18,
    table: PrimeTable | None = None,
) -> DistanceProfile:
    """Locate the distance-minimizing twist t0 in the window.

    Almost-real-valued functions (declared, overridden, or detected by the
    finite prime-mass proxy) get t0 = 0 with the reason recorded.  Otherwise
    a coarse scan at step 1/(2 log X) is refined locally; ties at the grid
    minimum are recorded and the smallest minimizer wins.  Minima attained
    at the window boundary are flagged.
    """
    if X < 16:
        raise UsageError("X must be >= 16")
    if table is None:
        table = prime_table(X)
    reason = None
    if real_override is True or (real_override is None and spec.real_flag):
        reason = "declared-real"
    elif real_override is not False:
        mass = nonreal_prime_mass(spec, X, table)
        if mass <= real_threshold:
            reason = f"near-real-mass:{mass:.3g}"
    if reason is not None:
        d0 = halasz_distance_sq(spec, 0.0, X, table)
        return DistanceProfile(
            t_grid=np.array([0.0]),
            d2_values=np.array([d0]),
            t0=0.0,
            X=X,
            d2_at_t0=d0,
            reason=reason,
        )
    lim = min(log(X) ** 3, float(X))
    if window is None:
        window = (-lim, lim)
    t_lo, t_hi = float(window[0]), float(window[1])
    if not (-X <= t_lo < t_hi <= X):
        raise UsageError(f"window {window} must be a nonempty interval inside [-X, X]")
    step = coarse_step if coarse_step is not None else 1.0 / (2.0 * log(X))
    n_pts = int(math.floor((t_hi - t_lo) / step)) + 1
    if n_pts > max_points:
        raise CapacityError(
            f"coarse grid of {n_pts} points exceeds {max_points}; pass a narrower window"
        )
    ps, fp = _prime_data(spec, X, table)
    absf = np.abs(fp).astype(np.float64)
    re_f = fp.real.astype(np.float64)
    im_f = fp.imag.astype(np.float64) if np.iscomplexobj(fp) else np.zeros_like(absf)
    grid = t_lo + step * np.arange(n_pts)
    d2 = _distance_grid(ps, absf, re_f, im_f, grid)
    jmin = int(np.argmin(d2))
    dmin = float(d2[jmin])
    tie_tol = 1e-12 * (1.0 + abs(dmin))
    ties = [float(t) for t in grid[np.abs(d2 - dmin) <= tie_tol][:32]]
    best = float(grid[jmin])
    cur_step = step
    for _ in range(refine_rounds):
        lo_r = max(t_lo, best - cur_step)
        hi_r = min(t_hi, best + cur_step)
        cur_step /= refine_factor
        n_loc = int(math.floor((hi_r - lo_r) / cur_step)) + 1
        loc = lo_r + cur_step * np.arange(n_loc)
        d2_loc = _distance_grid(ps, absf, re_f, im_f, loc)
        best = float(loc[int(np.argmin(d2_loc))])
    d2_best = float(_distance_grid(ps, absf, re_f, im_f, np.array([best]))[0])
    boundary = best - t_lo <= step or t_hi - best <= step
    return DistanceProfile(
        t_grid=grid,
        d2_values=d2,
        t0=best,
        X=X,
        d2_at_t0=d2_best,
        reason="search",
        boundary_attained=bool(boundary),
        ties=ties,
        final_step=cur_step,
    )


def distance_lowerbound_profile(
    spec,
    X: int,
    t_grid,
    rho: float,
    t0: float | None = None,
    table: PrimeTable | None = None,
) -> dict:
    """Margins D^2(t) - rho * min(log log X, 3 log(|t - t0| log X + 1)).

    The implied additive constant of the lower bound is unknown, so margins
    are recorded, not asserted.
    """
    if t0 is None:
        t0 = find_t0(spec, X, table=table).t0
    t_grid = np.asarray(t_grid, dtype=np.float64)
    d2 = distance_profile_values(spec, X, t_grid, table)
    cap = log(log(X))
    floor_term = rho * np.minimum(cap, 3.0 * np.log(np.abs(t_grid - t0) * log(X) + 1.0))
    margins = d2 - floor_term
    return {
        "t": t_grid,
        "d2": d2,
        "margins": margins,
        "rho": rho,
        "t0": t0,
        "min_margin": float(np.min(margins)),
    }


# ---------------------------------------------------------------------------
# Euler product diagnostics
# ---------------------------------------------------------------------------


def euler_product_truncated(spec, s: complex, X: int, table: PrimeTable | None = None) -> complex:
    """prod_{p <= X} (1 + f(p)/p^s + f(p^2)/p^{2s} + ...), each factor summed to convergence."""
    if s.real <= 0.5:
        raise UsageError("need Re(s) > 1/2 for convergent local factors")
    if table is None:
        table = prime_table(X)
    ps_int = table.upto(X)
    ps = ps_int.astype(np.float64)
    acc = np.ones(ps.size, dtype=np.complex128)
    a = 1
    while a <= 200:
        term = spec.prime_power_values(ps_int, a).astype(np.complex128)
        term = term * np.exp(-a * s * np.log(ps))
        acc += term
        if float(np.max(np.abs(term))) < 1e-18:
            break
        a += 1
    if np.any(np.abs(acc) < 1e-300):
        return 0.0 + 0.0j
    logs = np.log(acc)
    return complex(np.exp(csum_array(logs)))


def _dk_partial_sum_bound(t: float, k: int) -> float:
    """Crude upper estimate for sum_{n<=t} d_k(n): t (log t + k)^{k-1}/(k-1)!."""
    return t * (log(t) + k) ** (k - 1) / math.factorial(k - 1)


def dirichlet_series_tail_estimate(N: float, c: float, k: int) -> float:
    """Partial-summation estimate of sum_{n>N} d_k(n) n^{-1-c}.

    Uses D_k(t) <= t (log t + k)^{k-1}/(k-1)! and integrates numerically
    with the substitution t = N e^{u/c}.
    """
    if c <= 0:
        raise UsageError("need Re(s) > 1 for the tail estimate")
    us = np.linspace(0.0, 45.0, 451)
    ts = N * np.exp(us / c)
    g = (np.log(ts) + k) ** (k - 1) / math.factorial(k - 1)
    integrand = np.exp(-us) * g
    integral = float(np.trapezoid(integrand, us)) / c * N**-c
    boundary = N**-c * (log(N) + k) ** (k - 1) / math.factorial(k - 1)
    return (1 + c) * integral + boundary


def dirichlet_series_truncated(
    spec,
    s_values: list[complex],
    n_limit: int,
    table: PrimeTable | None = None,
    segment: int = 1 << 22,
) -> list[complex]:
    """sum_{n <= n_limit} f(n) n^{-s} for each s, sieving f(n) segment by segment."""
    if table is None:
        table = prime_table(isqrt(n_limit))
    parts: list[list[complex]] = [[] for _ in s_values]
    lo = 1
    while lo <= n_limit:
        hi = min(lo + segment, n_limit + 1)
        vals = values_on_range(spec, lo, hi, table).astype(np.complex128)
        n = np.arange(lo, hi, dtype=np.float64)
        ln = np.log(n)
        for j, s in enumerate(s_values):
            parts[j].append(csum_array(vals * np.exp(-s * ln)))
        lo = hi
    return [complex(sum(p)) for p in parts]


def euler_product_diagnostics(
    spec,
    t: float,
    gamma: float,
    X: int,
    alpha: float = 1.0,
    series_budget: int = 1 << 24,
    max_tail_rel: float = 0.30,
    table: PrimeTable | None = None,
) -> dict:
    """Measured ratios behind the product-vs-series comparison bounds.

    ratio_34: |F(1+it; X)| over the Dirichlet series at 1 + 1/log X + it,
    truncated at n <= min(X^3, series_budget) with the d_k-comparison tail
    estimate reported.  ratio_35: |F(1+1/logX+gamma+it)| * (gamma log X)^alpha
    / (P_f(X) log X).  Raises AccuracyError when the tail estimate exceeds
    max_tail_rel of the series value.
    """
    if gamma <= 1.0 / log(X):
        raise UsageError("need gamma > 1/log X")
    if table is None:
        table = prime_table(X)
    k = spec.bound_k
    c = 1.0 / log(X)
    n_limit = int(min(float(X) ** 3, float(series_budget)))
    s1 = complex(1.0 + c, t)
    s2 = complex(1.0 + c + gamma, t)
    series_table = table if table.limit >= isqrt(n_limit) else prime_table(isqrt(n_limit))
    series1, series2 = dirichlet_series_truncated(spec, [s1, s2], n_limit, series_table)
    tail1 = dirichlet_series_tail_estimate(n_limit, c, k)
    tail2 = dirichlet_series_tail_estimate(n_limit, c + gamma, k)
    rel1 = tail1 / max(abs(series1), 1e-300)
    rel2 = tail2 / max(abs(series2), 1e-300)
    if max(rel1, rel2) > max_tail_rel:
        raise AccuracyError(
            f"series tail estimate {max(rel1, rel2):.3g} exceeds budget {max_tail_rel}"
        )
    prod = euler_product_truncated(spec, complex(1.0, t), X, table)
    pf = mertens_product(spec, X, table)
    ratio_34 = abs(prod) / max(abs(series1), 1e-300)
    ratio_35 = abs(series2) * (gamma * log(X)) ** alpha / (pf * log(X))
    return {
        "ratio_34": ratio_34,
        "ratio_35": ratio_35,
        "product_at_1_it": abs(prod),
        "series_at_c0_it": abs(series1),
        "series_truncation": n_limit,
        "tail_rel": max(rel1, rel2),
        "pf": pf,
    }
