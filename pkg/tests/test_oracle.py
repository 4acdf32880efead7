import math

import numpy as np
import pytest

from scenprice import (
    GbmParams,
    NestedMcConfig,
    ProductKind,
    ProductSpec,
    TimeGrid,
    black_scholes_call,
    black_scholes_put,
    compare,
    nested_mc_price,
)
from scenprice.errors import InvalidArgument, ShapeError
from scenprice.valuation import DiscountModel

GRID = TimeGrid([0.0, 1.0, 2.0, 3.0])
ZERO_RATE = DiscountModel(rate=0.0)


class TestBlackScholes:
    def test_pinned_atm_value(self):
        # frozen from an independent 50-digit evaluation of the closed form
        assert abs(black_scholes_call(100.0, 100.0, 0.0, 0.2, 1.0)
                   - 7.965567455405797) < 1e-12

    def test_terminal_limit(self):
        assert abs(black_scholes_call(120.0, 100.0, 0.0, 0.2, 1e-12) - 20.0) < 1e-6
        assert black_scholes_call(80.0, 100.0, 0.0, 0.2, 1e-12) < 1e-6

    def test_zero_vol_limit(self):
        assert abs(black_scholes_call(120.0, 100.0, 0.0, 1e-9, 1.0) - 20.0) < 1e-6

    def test_invalid_inputs(self):
        with pytest.raises(InvalidArgument):
            black_scholes_call(-1.0, 100.0, 0.0, 0.2, 1.0)
        with pytest.raises(InvalidArgument):
            black_scholes_call(100.0, 100.0, 0.0, -0.2, 1.0)
        with pytest.raises(InvalidArgument):
            black_scholes_call(100.0, 100.0, 0.0, 0.2, 0.0)

    def test_put_call_parity(self):
        for spot in (70.0, 100.0, 140.0):
            for rate in (0.0, 0.03):
                c = black_scholes_call(spot, 100.0, rate, 0.25, 2.0)
                p = black_scholes_put(spot, 100.0, rate, 0.25, 2.0)
                assert abs((c - p) - (spot - 100.0 * math.exp(-rate * 2.0))) < 1e-10

    def test_monotone_in_spot_and_vol(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            s = rng.uniform(50, 150)
            v = rng.uniform(0.05, 0.6)
            assert black_scholes_call(s + 1.0, 100.0, 0.01, v, 1.5) > \
                black_scholes_call(s, 100.0, 0.01, v, 1.5)
            assert black_scholes_call(s, 100.0, 0.01, v + 0.01, 1.5) > \
                black_scholes_call(s, 100.0, 0.01, v, 1.5)


class TestNestedMc:
    def test_zero_inner_paths_rejected(self):
        with pytest.raises(InvalidArgument):
            NestedMcConfig(0, 1, GbmParams(100.0, 0.0, 0.2))

    def test_european_matches_black_scholes(self):
        gbm = GbmParams(100.0, 0.0, 0.2, seed=1)
        cfg = NestedMcConfig(1_000_000, 12345, gbm)
        product = ProductSpec(ProductKind.EUROPEAN_CALL, 100.0, 3)
        r = nested_mc_price(1, 110.0, (), product, GRID, cfg, ZERO_RATE)
        bs = black_scholes_call(110.0, 100.0, 0.0, 0.2, 2.0)
        assert abs(r.estimate - bs) < 4 * r.stderr
        assert r.n_steps == 2 * 1_000_000

    def test_deep_otm_zero(self):
        gbm = GbmParams(100.0, 0.0, 1e-9, seed=2)
        cfg = NestedMcConfig(1000, 7, gbm)
        product = ProductSpec(ProductKind.EUROPEAN_CALL, 100.0, 3)
        r = nested_mc_price(1, 50.0, (), product, GRID, cfg, ZERO_RATE)
        assert r.estimate == 0.0
        assert r.stderr == 0.0

    def test_at_maturity_returns_intrinsic(self):
        gbm = GbmParams(100.0, 0.0, 0.2, seed=3)
        cfg = NestedMcConfig(10, 7, gbm)
        product = ProductSpec(ProductKind.EUROPEAN_CALL, 100.0, 3)
        r = nested_mc_price(3, 117.5, (), product, GRID, cfg, ZERO_RATE)
        assert r.estimate == 17.5
        assert r.stderr == 0.0

    def test_asian_matches_independent_brute_force(self):
        # desk-scale brute force written against a separate RNG and plain loops
        gbm = GbmParams(100.0, 0.0, 0.25, seed=4)
        product = ProductSpec(ProductKind.ASIAN_CALL, 100.0, 3)
        state = (105.0,)  # running average after the fixings at t0, t1
        cfg = NestedMcConfig(40_000, 99, gbm)
        r = nested_mc_price(1, 110.0, state, product, GRID, cfg, ZERO_RATE)

        rng = np.random.default_rng(1717)
        n = 40_000
        payoffs = np.empty(n)
        for i in range(n):
            s = 110.0
            total = 2 * 105.0  # two fixings absorbed
            for _ in range(2):  # t2, t3
                s = s * math.exp(-0.5 * 0.25**2 + 0.25 * rng.standard_normal())
                total += s
            payoffs[i] = max(total / 4.0 - 100.0, 0.0)
        brute = payoffs.mean()
        brute_se = payoffs.std(ddof=1) / math.sqrt(n)
        assert abs(r.estimate - brute) < 4 * math.hypot(r.stderr, brute_se)

    def test_stderr_scales_with_sqrt_n(self):
        gbm = GbmParams(100.0, 0.0, 0.2, seed=5)
        product = ProductSpec(ProductKind.EUROPEAN_CALL, 100.0, 3)
        ratios = []
        for seed in range(10):
            small = nested_mc_price(1, 100.0, (), product, GRID,
                                    NestedMcConfig(4000, seed, gbm), ZERO_RATE)
            big = nested_mc_price(1, 100.0, (), product, GRID,
                                  NestedMcConfig(16000, 1000 + seed, gbm), ZERO_RATE)
            ratios.append(small.stderr / big.stderr)
        assert 1.8 <= np.mean(ratios) <= 2.2

    def test_barrier_state_respected(self):
        gbm = GbmParams(100.0, 0.0, 0.2, seed=6)
        product = ProductSpec(ProductKind.BARRIER_KNOCK_OUT_CALL, 100.0, 3,
                              barrier_level=150.0)
        cfg = NestedMcConfig(2000, 11, gbm)
        dead = nested_mc_price(1, 110.0, (0.0,), product, GRID, cfg, ZERO_RATE)
        alive = nested_mc_price(1, 110.0, (1.0,), product, GRID, cfg, ZERO_RATE)
        assert dead.estimate == 0.0
        assert alive.estimate > 0.0


class TestCompare:
    def test_identical(self):
        a = np.arange(6, dtype=float).reshape(2, 3)
        rep = compare(a, a)
        assert rep.max_abs_error == 0.0
        assert rep.rmse == 0.0

    def test_constant_shift(self):
        a = np.arange(6, dtype=float).reshape(2, 3)
        rep = compare(a, a + 0.5)
        assert abs(rep.max_abs_error - 0.5) < 1e-15

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            compare(np.zeros(3), np.zeros(4))

    def test_z_scores(self):
        rep = compare(np.array([1.0, 2.0]), np.array([0.0, 2.0]),
                      np.array([0.5, 0.5]))
        assert np.allclose(rep.z_scores, [2.0, 0.0])
        assert rep.to_dict()["normal_cdf_impl"] == "math.erf"
