import math

import numpy as np
import pytest

from shortint.dirichlet import (
    RamareDecomposition,
    WellSpacedSet,
    amplified_meanvalue,
    dirichlet_values,
    discrete_meanvalue_check,
    dpoly_eval,
    henriot_correlation,
    large_value_set,
    meanvalue_check,
    meanvalue_envelope,
    perron_window_check,
    ramare_decompose,
    rough_restricted_sum,
)
from shortint.errors import UsageError, VerificationError
from shortint.multfun import eval_spec, get_spec, mertens_product, values_on_range
from shortint.numutil import quad_grid
from shortint.primes import prime_table
from shortint.sieve import trial_division


class TestDpolyEval:
    def test_single_coefficient_modulus(self):
        g = dpoly_eval(np.array([1.0]), 7, np.linspace(-3, 3, 13))
        assert np.allclose(np.abs(g.values), 1.0 / 7.0, rtol=0, atol=1e-14)

    def test_two_coefficient_closed_form(self):
        ts = np.linspace(-5, 5, 41)
        g = dpoly_eval(np.array([1.0, 1.0]), 1, ts)
        pred = 1.25 + np.cos(ts * math.log(2))
        assert np.max(np.abs(np.abs(g.values) ** 2 - pred)) < 1e-12

    def test_matches_direct_evaluation(self, rng):
        n = 1000
        coeffs = rng.choice([-1.0, 1.0], size=n)
        ts = np.linspace(0.0, 20.0, 2001)
        g = dpoly_eval(coeffs, 1, ts)
        ln = np.log(np.arange(1, n + 1, dtype=float))
        for j in rng.integers(0, ts.size, size=32):
            direct = np.sum(coeffs / np.arange(1, n + 1) * np.exp(-1j * ts[j] * ln))
            assert abs(g.values[j] - direct) <= 1e-9 * (1 + abs(direct))

    def test_value_at_zero_is_plain_sum(self, rng):
        coeffs = rng.random(500)
        g = dpoly_eval(coeffs, 1, np.array([0.0]))
        plain = np.sum(coeffs / np.arange(1, 501))
        assert abs(g.values[0] - plain) <= 1e-9 * plain

    def test_triangle_bound(self, rng):
        coeffs = rng.standard_normal(200)
        g = dpoly_eval(coeffs, 1, np.linspace(-9, 9, 101))
        assert np.max(np.abs(g.values)) <= g.abs_coeff_harmonic() + 1e-12

    def test_nonuniform_grid_rejected(self):
        with pytest.raises(UsageError):
            dpoly_eval(np.ones(4), 1, np.array([0.0, 1.0, 3.0]))


class TestMeanValue:
    def test_single_coefficient_exact_two(self):
        c = np.zeros(6)
        c[3] = 1.0
        out = meanvalue_check(c, 100.0, 1e-2)
        assert out["ratio"] == 2.0

    def test_two_coefficient_closed_form(self):
        out = meanvalue_check(np.array([1.0, 1.0]), 100.0, 1e-3)
        closed = 400.0 + 4.0 * math.sin(100.0 * math.log(2.0)) / math.log(2.0)
        assert abs(out["lhs"] - closed) <= 1e-6 * closed

    def test_random_coefficients_within_envelope(self, rng):
        coeffs = rng.choice([-1.0, 1.0], size=1000)
        for T in (10.0, 100.0):
            out = meanvalue_check(coeffs, T, 1.0 / (4 * math.log(1000)))
            assert out["ratio"] <= 10.0

    def test_step_precondition(self):
        with pytest.raises(UsageError):
            meanvalue_check(np.ones(1000), 10.0, 0.5)


class TestDiscreteMeanValue:
    def test_single_point_single_coefficient(self):
        X = 100
        coeffs = np.zeros(X)
        coeffs[10] = 1.0  # n0 = X + 11
        ws = WellSpacedSet(points=np.array([0.0]), T=5.0)
        out = discrete_meanvalue_check(coeffs, ws, X)
        assert abs(out["lhs"] - 1.0 / (X + 11) ** 2) < 1e-15

    def test_empty_set(self):
        out = discrete_meanvalue_check(np.ones(50), WellSpacedSet(points=np.array([]), T=5.0), 50)
        assert out["lhs"] == 0.0

    def test_unit_coefficients_envelope(self):
        X = 10**4
        pts = np.arange(-50.0, 51.0, 2.0)
        out = discrete_meanvalue_check(np.ones(X), WellSpacedSet(points=pts, T=100.0), X)
        assert out["ratio"] <= 10.0

    def test_spacing_invariant(self):
        with pytest.raises(UsageError):
            WellSpacedSet(points=np.array([0.0, 0.5]), T=10.0)
        with pytest.raises(UsageError):
            WellSpacedSet(points=np.array([0.0, 20.0]), T=10.0)


class TestLargeValues:
    def setup_method(self):
        self.table = prime_table(2001)
        self.ps = self.table.in_window(1000, 2000)

    def test_unreachable_threshold_empty(self):
        cs = np.ones(self.ps.size)
        reach = float(np.sum(np.abs(cs) / self.ps))
        out = large_value_set(self.ps, cs, 1000.0, 100.0, 1.0 / (2 * reach), 2)
        assert out["count"] == 0

    def test_zero_point_selected(self):
        cs = np.full(self.ps.size, 2.0)
        out = large_value_set(self.ps, cs, 1000.0, 10**3, 10.0, 2)
        assert out["count"] >= 1
        assert any(abs(t) <= 0.6 for t in out["set"].points)
        pts = out["set"].points
        if pts.size > 1:
            assert np.min(np.diff(pts)) >= 1.0
        for t in pts:
            v = abs(dirichlet_values(self.ps, cs, [t])[0])
            assert v >= out["threshold"]
        assert out["count"] <= 10.0 * out["bound"]

    def test_coefficient_bound_enforced(self):
        cs = np.full(self.ps.size, 5.0)
        with pytest.raises(UsageError):
            large_value_set(self.ps, cs, 1000.0, 100.0, 10.0, 2)


class TestHenriot:
    def test_no_admissible_shift(self, d2):
        out = henriot_correlation(d2, 10**5, 10**3, 3, 7, 7)  # gcd 7 > K
        assert out["lhs"] == 0.0

    def test_unit_function_count(self, d1):
        out = henriot_correlation(d1, 10**5, 10**3, 10, 1, 1)
        assert abs(out["lhs"] - 2 * 10 * 10**3) <= 2 * 10 + 5
        assert 1.5 <= out["ratio"] <= 2.5

    def test_d2_within_envelope(self, d2):
        out = henriot_correlation(d2, 10**5, 10**4, 10, 2, 3)
        assert out["ratio"] <= 100.0

    def test_r_cap_validated(self, d2):
        with pytest.raises(UsageError):
            henriot_correlation(d2, 10**5, 10, 5, 10**4, 3)


class TestRamare:
    def test_keystone_exactness(self, d2):
        dec = ramare_decompose(d2, 10**4, 10, 100, 5, [0.0, 1.0, 10.0])
        assert dec.max_residual() <= 1e-9 * dec.tolerance_scale

    def test_real_input_real_pieces_at_zero(self, d2):
        dec = ramare_decompose(d2, 10**3, 10, 50, 3, [0.0])
        for name, vals in dec.pieces.items():
            assert abs(vals[0].imag) <= 1e-12, name

    def test_empty_prime_window(self, d2):
        dec = ramare_decompose(d2, 10**3, 24, 28, 3, [0.0, 2.0])
        for name in ("B1", "B2", "B3", "B4"):
            assert np.max(np.abs(dec.pieces[name])) == 0.0
        assert np.allclose(dec.pieces["B5"], dec.lhs)

    def test_twisted_spec(self):
        tw = get_spec("dk_twist:2:1.5")
        dec = ramare_decompose(tw, 10**3, 5, 50, 4, [0.0, 3.0], restriction="none")
        assert dec.max_residual() <= 1e-9 * dec.tolerance_scale

    def test_partial_overlap_rejected_for_anchored(self, d2):
        with pytest.raises(UsageError):
            ramare_decompose(d2, 10**4, 10, 100, 5, [0.0], restriction="AB")

    def test_auto_fallback_recorded(self, d2):
        dec = ramare_decompose(d2, 10**4, 10, 100, 5, [0.0])
        assert dec.restriction_used == "budget"

    def test_cofactor_hypothesis(self, d2, rng):
        # a_{mp} = b_m c_p for p not dividing m is what makes the identity exact
        from shortint.multfun import mertens_product as mp_
        from shortint.restrict import omega_budget
        from shortint.sieve import BigOmegaChannel, scan_range

        X, P, Q = 10**3, 10, 50
        table = prime_table(2 * X)
        pf = mp_(d2, X, table)
        eps = 0.5
        budget = omega_budget(eps / 2, pf, X)
        f = values_on_range(d2, 1, 2 * X + 1, table).astype(float)
        ch = BigOmegaChannel()
        scan_range(1, 2 * X + 1, table, [ch])
        om = ch.values
        ps = [int(p) for p in table.in_window(P, Q)]
        for _ in range(200):
            p = ps[int(rng.integers(0, len(ps)))]
            m = int(rng.integers(X // p + 1, 2 * X // p + 1))
            if m % p == 0 or not (X < m * p <= 2 * X):
                continue
            a_mp = f[m * p - 1] * (om[m * p - 1] <= budget)
            b_m = f[m - 1] * (om[m - 1] <= budget - 1)
            assert a_mp == b_m * 2.0  # c_p = f(p) = 2 for d_2


class TestRoughSums:
    def test_empty_window_is_plain_weight(self, d1):
        out = rough_restricted_sum(d1, 10**3, 100.0, 10.0, 0.0, [0.0])
        ns = np.arange(10**3 + 1, 2 * 10**3 + 1)
        assert abs(out["R_values"][0] - np.sum(1.0 / ns)) < 1e-12

    def test_unit_function_count_crosscheck(self, d1):
        X, P, Q = 10**3, 5.0, 30.0
        out = rough_restricted_sum(d1, X, P, Q, 0.0, [0.0])
        direct = 0.0
        for n in range(X + 1, 2 * X + 1):
            if all(not (P <= p <= Q) for p, _ in trial_division(n).entries):
                direct += 1.0 / n
        assert abs(out["sums"][0] - direct) < 1e-12

    def test_sup_rows_recorded(self, d2):
        out = rough_restricted_sum(d2, 10**4, 10.0, 100.0, 0.0, np.linspace(1, 40, 20))
        names = {r["name"] for r in out["rows"]}
        assert "rough-sup" in names and "weighted-sup" in names


class TestAmplified:
    def test_l_zero_delegates_bitwise(self, d2):
        out = amplified_meanvalue(d2, 100, 50, 10**5, 50.0)
        n_lo, n_hi = 10**5 // 50 + 1, 2 * 10**5 // 50
        from shortint.multfun import mertens_product
        from shortint.restrict import omega_budget
        from shortint.sieve import BigOmegaChannel, scan_range

        table = prime_table(10**5)
        pf = mertens_product(d2, 10**5, table)
        budget = omega_budget(0.5, pf, 10**5)
        ch = BigOmegaChannel()
        scan_range(n_lo, n_hi + 1, table, [ch])
        f = values_on_range(d2, n_lo, n_hi + 1, table).astype(np.complex128)
        a_m = np.where(ch.values <= budget, f, 0.0)
        ms = np.arange(n_lo, n_hi + 1, dtype=np.float64)
        padded = np.zeros(n_hi, dtype=np.complex128)
        padded[n_lo - 1 :] = a_m / ms
        direct = meanvalue_check(padded, 50.0, 1.0 / (4.0 * math.log(2 * 10**5)), envelope=100.0)
        assert out == direct

    def test_single_prime_amplifier_closed_form(self, d2):
        # (Y1, 2Y1] = (2, 4] holds the single prime 3; l = 1 scales the
        # integrand by |c_3/3|^2 pointwise
        out = amplified_meanvalue(d2, 2, 2, 10**4, 20.0, l=1)
        base = amplified_meanvalue(d2, 2, 2, 10**4, 20.0)  # l = 0 on the same A range
        c3 = abs(eval_spec(d2, trial_division(3)))
        assert abs(out["lhs"] - (c3 / 3.0) ** 2 * base["lhs"]) <= 1e-9 * base["lhs"]

    def test_l_cap(self, d2):
        with pytest.raises(UsageError):
            amplified_meanvalue(d2, 2, 10**7, 10**7, 10.0, l=25)


class TestPerron:
    def test_integer_endpoints_rejected(self, d1):
        with pytest.raises(UsageError):
            perron_window_check(d1, 100.0, 10, 100.0)
        with pytest.raises(UsageError):
            perron_window_check(d1, 100.5, 10.5, 100.0)

    def test_empty_window(self, d1):
        out = perron_window_check(d1, 100.25, 0.5, 2000.0, 0.02)
        assert out["exact"] == 0
        assert abs(out["approx"]) < 0.1

    def test_error_decreases(self, d1):
        e1 = perron_window_check(d1, 100.5, 10, 100.0, 0.02)["error"]
        e2 = perron_window_check(d1, 100.5, 10, 1600.0, 0.02)["error"]
        assert e2 <= e1 / 2.0

    def test_d2_relative_error(self, d2):
        out = perron_window_check(d2, 10**3 + 0.5, 50, 10**4, 0.02)
        assert out["error"] <= 0.05 * abs(out["exact"])
