import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortint.errors import CapacityError, UsageError
from shortint.multfun import OmegaPowerSpec, values_on_range
from shortint.primes import prime_table
from shortint.sieve import (
    FactorVector,
    big_omega,
    build_segment,
    divisor_sum_hyperbola,
    dk_array,
    dk_value,
    factor,
    get_segment,
    load_segment,
    save_segment,
    small_omega,
    squarefree_harmonic_oracle,
    trial_division,
)


def ordered_factorizations(n, k):
    """Brute-force count of ordered k-tuples with product n."""
    if k == 1:
        return 1
    total = 0
    for d in range(1, n + 1):
        if n % d == 0:
            total += ordered_factorizations(n // d, k - 1)
    return total


class TestFactorVector:
    def test_hand_factorizations(self):
        seg = build_segment(10, 20)
        assert factor(seg, 12).entries == ((2, 2), (3, 1))
        assert factor(seg, 13).entries == ((13, 1),)

    def test_single_value_segment(self):
        seg = build_segment(2, 3)
        assert factor(seg, 2).entries == ((2, 1),)

    def test_one_is_empty(self):
        seg = build_segment(1, 4)
        assert factor(seg, 1).entries == ()
        assert factor(seg, 1).n == 1

    def test_semiprime(self):
        seg = build_segment(9990, 9995)
        assert factor(seg, 9991).entries == ((97, 1), (103, 1))

    def test_out_of_range_rejected(self):
        seg = build_segment(10, 20)
        with pytest.raises(UsageError):
            factor(seg, 20)

    def test_invariants_enforced(self):
        with pytest.raises(UsageError):
            FactorVector(((3, 1), (2, 1)))
        with pytest.raises(UsageError):
            FactorVector(((2, 0),))

    @given(st.integers(min_value=1, max_value=10**6))
    @settings(max_examples=200, deadline=None)
    def test_trial_division_roundtrip(self, n):
        fv = trial_division(n)
        assert fv.n == n
        for p, _ in fv.entries:
            assert trial_division(p).entries == ((p, 1),)


class TestCounters:
    def test_omegas(self):
        fv = trial_division(12)
        assert big_omega(fv) == 3 and small_omega(fv) == 2
        assert big_omega(trial_division(1)) == 0
        assert small_omega(trial_division(1)) == 0
        fv2 = trial_division(2**10)
        assert big_omega(fv2) == 10 and small_omega(fv2) == 1

    def test_dk_examples(self):
        assert dk_value(trial_division(6), 2) == 4 == ordered_factorizations(6, 2)
        assert dk_value(trial_division(4), 3) == 6 == ordered_factorizations(4, 3)
        for k in range(1, 8):
            assert dk_value(trial_division(1), k) == 1

    @given(st.integers(min_value=1, max_value=60), st.integers(min_value=1, max_value=4))
    @settings(max_examples=80, deadline=None)
    def test_dk_matches_enumeration(self, n, k):
        assert dk_value(trial_division(n), k) == ordered_factorizations(n, k)

    def test_segment_matches_trial_division(self):
        lo, hi = 10**6, 10**6 + 2000
        seg = build_segment(lo, hi)
        dks = {k: dk_array(lo, hi, k) for k in (2, 3)}
        for n in range(lo, hi, 37):
            fv = trial_division(n)
            got = factor(seg, n)
            assert got == fv
            assert seg.big_omega[n - lo] == big_omega(fv)
            assert seg.small_omega[n - lo] == small_omega(fv)
            assert seg.mu_squared[n - lo] == all(a == 1 for _, a in fv.entries)
            for k in (2, 3):
                assert dks[k][n - lo] == dk_value(fv, k)

    def test_pointwise_dk_bounded_by_k_power_omega(self, rng):
        seg = build_segment(5000, 9096)
        for n in rng.integers(seg.lo, seg.hi, size=100):
            fv = factor(seg, int(n))
            for k in (2, 3, 5):
                assert dk_value(fv, k) <= k ** big_omega(fv)


class TestOracles:
    def test_hyperbola_small(self):
        assert divisor_sum_hyperbola(1) == 1
        # d(1..10) = 1,2,2,3,2,4,2,4,3,4
        assert divisor_sum_hyperbola(10) == 27

    @pytest.mark.parametrize("x", [10**3, 10**5])
    def test_hyperbola_vs_sieve(self, x):
        total = 1 + int(np.sum(dk_array(2, x + 1, 2), dtype=np.int64))
        assert total == divisor_sum_hyperbola(x)

    def test_squarefree_harmonic_small(self):
        assert squarefree_harmonic_oracle(1) == 1
        assert squarefree_harmonic_oracle(4) == 7  # 1 + 2 + 2 + 2

    def test_squarefree_harmonic_vs_sieve(self):
        x = 10**3
        seg = build_segment(1, x + 1)
        direct = int(np.sum(np.int64(1) << seg.small_omega.astype(np.int64)))
        assert direct == squarefree_harmonic_oracle(x)

    def test_dirichlet_convolution(self):
        limit = 2000
        prev = np.concatenate(([0], dk_array(1, limit + 1, 1)))
        for k in range(2, 6):
            cur = dk_array(1, limit + 1, k)
            conv = np.zeros(limit + 1, dtype=np.int64)
            for d in range(1, limit + 1):
                conv[d::d] += prev[d]
            assert np.array_equal(conv[1:], cur), f"k={k}"
            prev = np.concatenate(([0], cur))


class TestLimits:
    def test_bad_ranges(self):
        with pytest.raises(UsageError):
            build_segment(5, 4)
        with pytest.raises(UsageError):
            build_segment(0, 10)

    def test_capacity_budget(self):
        with pytest.raises(CapacityError):
            build_segment(1, 2**27, max_size=2**20)

    def test_incomplete_prime_table(self):
        from shortint.primes import PrimeTable, eratosthenes

        small = PrimeTable(limit=10, values=eratosthenes(10))
        with pytest.raises(UsageError):
            build_segment(10**6, 10**6 + 10, table=small)

    def test_int64_overflow_is_explicit(self):
        # 3^Omega(n) overflows int64 at n = 3 * 2^40 (Omega = 41)
        spec = OmegaPowerSpec(3)
        n0 = 3 * 2**40
        with pytest.raises(OverflowError):
            values_on_range(spec, n0 - 2, n0 + 2)


class TestCache:
    def test_roundtrip_and_bytes(self, tmp_path):
        seg = build_segment(1000, 3000)
        p1 = save_segment(seg, str(tmp_path))
        data1 = open(p1, "rb").read()
        p2 = save_segment(seg, str(tmp_path))
        assert open(p2, "rb").read() == data1
        loaded = load_segment(str(tmp_path), 1000, 3000, seg.flags())
        assert loaded is not None
        assert np.array_equal(loaded.big_omega, seg.big_omega)
        assert np.array_equal(loaded.spf, seg.spf)
        assert factor(loaded, 2048).entries == ((2, 11),)

    def test_corruption_detected(self, tmp_path):
        seg = build_segment(1000, 2000)
        path = save_segment(seg, str(tmp_path))
        with open(path, "r+b") as fh:
            fh.write(b"ZZZZ")
        assert load_segment(str(tmp_path), 1000, 2000, seg.flags()) is None
        # truncation
        save_segment(seg, str(tmp_path))
        data = open(path, "rb").read()
        with open(path, "wb") as fh:
            fh.write(data[:-10])
        assert load_segment(str(tmp_path), 1000, 2000, seg.flags()) is None

    def test_get_segment_rebuilds_corrupt(self, tmp_path):
        seg, hit = get_segment(500, 600, cache_dir=str(tmp_path))
        assert not hit
        seg2, hit2 = get_segment(500, 600, cache_dir=str(tmp_path))
        assert hit2
        assert np.array_equal(seg2.small_omega, seg.small_omega)
        path = save_segment(seg, str(tmp_path))
        with open(path, "r+b") as fh:
            fh.write(b"ZZZZ")
        seg3, hit3 = get_segment(500, 600, cache_dir=str(tmp_path))
        assert not hit3
        assert np.array_equal(seg3.small_omega, seg.small_omega)
