import cmath
import math

import numpy as np
import pytest
from scipy.integrate import quad

from shortint.errors import UsageError
from shortint.multfun import get_spec
from shortint.sieve import small_omega, trial_division
from shortint.windows import (
    ValueTable,
    discrepancy_profile,
    exceptional_measure,
    inverse_threshold_experiment,
    l2_variance,
    long_reference,
    window_sums,
    window_weight,
)


@pytest.fixture(scope="module")
def table_one():
    return ValueTable.build(get_spec("dk:1"), 10**4, 32)


@pytest.fixture(scope="module")
def table_d2():
    return ValueTable.build(get_spec("dk:2"), 10**4, 64)


@pytest.fixture(scope="module")
def table_twist():
    return ValueTable.build(get_spec("dk_twist:2:3.0"), 10**4, 64, t0=3.0)


class TestWindowSums:
    def test_unit_function(self, table_one):
        assert bool(np.all(window_sums(table_one, 7) == 7))

    def test_h_zero(self, table_one):
        assert bool(np.all(window_sums(table_one, 0) == 0))

    def test_margin_enforced(self, table_one):
        with pytest.raises(UsageError):
            window_sums(table_one, 33)

    def test_matches_direct_summation(self, table_d2, rng):
        ws = window_sums(table_d2, 10)
        X = table_d2.X
        for _ in range(20):
            x = int(rng.integers(X, 2 * X))
            direct = sum(
                len([d for d in range(1, n + 1) if n % d == 0]) for n in range(x + 1, x + 11)
            )
            assert int(ws[x - X]) == direct

    def test_prefix_consistency_complex(self, table_twist, rng):
        t = table_twist
        for _ in range(50):
            a = int(rng.integers(t.n0, t.n1 - 20))
            b = a + int(rng.integers(1, 20))
            seg = t.values[a - t.n0 : b - t.n0].astype(np.complex128)
            direct = complex(np.sum(seg))
            scale = 1.0 + float(np.sum(np.abs(seg)))
            assert abs(t.sum_range(a, b) - direct) <= 1e-9 * scale


class TestWindowWeight:
    def test_untwisted_exact(self):
        assert window_weight(100, 10, 0.0) == 10
        assert window_weight(100, 10, 0.0, mean=True) == 1.0

    def test_quadrature_oracle(self):
        w = window_weight(100, 10, 3.0)
        re = quad(lambda u: math.cos(3 * math.log(u)), 100, 110, epsabs=1e-13, epsrel=1e-13)[0]
        im = quad(lambda u: math.sin(3 * math.log(u)), 100, 110, epsabs=1e-13, epsrel=1e-13)[0]
        assert abs(w - complex(re, im)) < 1e-10

    def test_small_h_limit(self):
        x, t0 = 1000.0, 2.0
        mean = window_weight(x, 1e-7, t0, mean=True)
        assert abs(mean - cmath.exp(1j * t0 * math.log(x))) < 1e-6


class TestDiscrepancy:
    def test_unit_function_vanishes(self, table_one):
        scan = discrepancy_profile(table_one, 8, normalizer=1.0)
        assert scan.summary["l2"] == 0.0
        assert scan.summary["mean_abs"] == 0.0
        assert exceptional_measure(scan, 0.5) == 0.0

    def test_pure_twist_cancellation(self):
        t = ValueTable.build(get_spec("dk_twist:1:3.0"), 10**5, 1000, t0=3.0)
        scan = discrepancy_profile(t, 1000, normalizer=1.0)
        assert scan.summary["p99"] <= 1e-2

    def test_t0_mismatch_rejected(self, table_twist):
        with pytest.raises(UsageError):
            discrepancy_profile(table_twist, 10, t0=1.0)

    def test_mean_delta_telescope(self, table_d2):
        scan = discrepancy_profile(table_d2, 50, normalizer=1.0)
        mean_delta = abs(float(np.mean(scan.delta)))
        max_f = float(np.max(np.abs(table_d2.values)))
        assert mean_delta <= 10.0 * max_f / table_d2.X

    def test_eta_monotone_and_limits(self, table_d2):
        scan = discrepancy_profile(table_d2, 16, normalizer=math.log(10**4))
        fr = [exceptional_measure(scan, e) for e in (0.1, 0.3, 0.9)]
        assert fr[0] >= fr[1] >= fr[2]
        assert exceptional_measure(scan, 1e-12) > 0.99

    def test_cauchy_schwarz(self, table_d2):
        scan = discrepancy_profile(table_d2, 16, normalizer=1.0)
        assert scan.summary["l2"] >= scan.summary["mean_abs"] ** 2 - 1e-9


class TestVariance:
    def test_unit_function_zero(self, table_one):
        assert l2_variance(table_one, 8) == 0.0

    def test_matches_scan_l2(self, table_d2):
        scan = discrepancy_profile(table_d2, 16, normalizer=1.0)
        assert abs(l2_variance(table_d2, 16) - scan.summary["l2"]) < 1e-12

    def test_twisted_mode(self, table_twist):
        v = l2_variance(table_twist, 16, mode="twisted")
        assert v >= 0.0
        with pytest.raises(UsageError):
            l2_variance(table_twist, 16, mode="bogus")


class TestInverseThreshold:
    def test_h_zero_row(self):
        out = inverse_threshold_experiment(10**3, 2, 0.3, [0])
        assert out["rows"][0] == {"h": 0, "vanish_fraction": 1.0, "concentrated_dk_mass": 0.0}

    def test_eps_prime_validation(self):
        with pytest.raises(UsageError):
            inverse_threshold_experiment(10**3, 2, 2.0, [2])
        with pytest.raises(UsageError):
            inverse_threshold_experiment(10**3, 2, -0.1, [2])

    def test_direct_count_oracle(self):
        X, k, eps = 300, 1, 0.5
        out = inverse_threshold_experiment(X, k, eps, [3])
        llx = math.log(math.log(X))
        lo, hi = k * llx - eps * llx, k * llx + eps * llx
        vanish = 0
        for x in range(X, 2 * X + 1):
            typical = [
                n for n in range(x + 1, x + 4) if lo <= small_omega(trial_division(n)) <= hi
            ]
            if not typical:
                vanish += 1
        assert abs(out["rows"][0]["vanish_fraction"] - vanish / (X + 1)) < 1e-12

    def test_vanish_nesting_monotone(self):
        out = inverse_threshold_experiment(10**4, 2, 0.25, [2, 5, 11])
        vf = [r["vanish_fraction"] for r in out["rows"]]
        assert vf[0] >= vf[1] >= vf[2]
