import math

import numpy as np
import pytest

from scenprice import (
    DiscountBase,
    DiscountModel,
    ProductKind,
    ProductSpec,
    accumulate_remaining_value,
    compute_cashflows,
    compute_state_table,
    discount_factor,
)
from scenprice.errors import InvalidArgument
from scenprice.grids import TimeGrid
from scenprice.products import CashFlowTable
from scenprice.refdata import EUROPEAN_VALUES, MATURITY_INDEX, STRIKE, q_fixed_set

EUROPEAN = ProductSpec(ProductKind.EUROPEAN_CALL, STRIKE, MATURITY_INDEX)


class TestDiscountFactor:
    def test_zero_rate_is_one(self):
        assert discount_factor(DiscountModel(rate=0.0), 0.3, 2.7) == 1.0

    def test_identity(self):
        assert discount_factor(DiscountModel(rate=0.07), 1.5, 1.5) == 1.0

    def test_two_year_factor(self):
        d = discount_factor(DiscountModel(rate=0.05), 0.0, 2.0)
        assert abs(d - math.exp(-0.1)) < 1e-15
        assert abs(d - 0.904837) < 1e-6

    def test_backward_time_rejected(self):
        with pytest.raises(InvalidArgument):
            discount_factor(DiscountModel(rate=0.05), 2.0, 1.0)


def single_path_cashflows(times, flows):
    grid = TimeGrid(times)
    values = np.asarray(flows, dtype=np.float64)[:, None]
    return CashFlowTable(grid, values, np.zeros(1, dtype=np.int64))


class TestAccumulate:
    def test_european_single_flow_equal_at_all_times(self):
        q = q_fixed_set()
        cf = compute_cashflows(EUROPEAN, q, compute_state_table(EUROPEAN, q))
        v = accumulate_remaining_value(cf, DiscountModel(rate=0.0))
        for k in range(4):
            assert np.allclose(v.values[k], EUROPEAN_VALUES, atol=1e-12)

    def test_zero_flows_zero_value(self):
        cf = single_path_cashflows([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        v = accumulate_remaining_value(cf, DiscountModel(rate=0.08))
        assert np.all(v.values == 0.0)

    def test_two_flow_hand_value(self):
        # flows of 1.0 at t2 and t3 seen from t1 at 5%:
        # e^{-0.05} + e^{-0.10} = 1.856067 (direct evaluation)
        cf = single_path_cashflows([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 1.0, 1.0])
        v = accumulate_remaining_value(cf, DiscountModel(rate=0.05),
                                       DiscountBase.VALUATION_TIME)
        expected = math.exp(-0.05) + math.exp(-0.10)
        assert abs(v.values[1, 0] - expected) < 1e-12
        assert abs(expected - 1.8560668425366735) < 1e-15

    def test_initial_time_base_literal_formula(self):
        cf = single_path_cashflows([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 1.0, 1.0])
        model = DiscountModel(rate=0.05)
        v = accumulate_remaining_value(cf, model, DiscountBase.INITIAL_TIME)
        # every remaining flow discounted to t0, regardless of valuation time
        expected_t1 = math.exp(-0.05 * 2.0) + math.exp(-0.05 * 3.0)
        assert abs(v.values[1, 0] - expected_t1) < 1e-12
        assert abs(v.values[0, 0] - expected_t1) < 1e-12

    def test_zero_rate_bases_coincide(self):
        q = q_fixed_set()
        cf = compute_cashflows(EUROPEAN, q, compute_state_table(EUROPEAN, q))
        model = DiscountModel(rate=0.0)
        a = accumulate_remaining_value(cf, model, DiscountBase.VALUATION_TIME)
        b = accumulate_remaining_value(cf, model, DiscountBase.INITIAL_TIME)
        assert np.array_equal(a.values, b.values, equal_nan=True)

    def test_backward_recursion_and_direct_sum(self):
        rng = np.random.default_rng(3)
        times = np.sort(rng.uniform(0.0, 5.0, 6))
        flows = rng.uniform(-2.0, 5.0, 6)
        model = DiscountModel(rate=0.04)
        cf = single_path_cashflows(times, flows)
        v = accumulate_remaining_value(cf, model)
        for k in range(5):
            step = discount_factor(model, float(times[k]), float(times[k + 1]))
            assert np.isclose(v.values[k, 0],
                              flows[k] + step * v.values[k + 1, 0], rtol=1e-12)
        for k in range(6):
            direct = sum(discount_factor(model, float(times[k]), float(times[j])) * flows[j]
                         for j in range(k, 6))
            assert np.isclose(v.values[k, 0], direct, rtol=1e-10)

    def test_activation_respected(self):
        grid = TimeGrid([0.0, 1.0, 2.0])
        values = np.array([[np.nan], [0.0], [5.0]])
        cf = CashFlowTable(grid, values, np.array([1], dtype=np.int64))
        v = accumulate_remaining_value(cf, DiscountModel(rate=0.0))
        assert np.isnan(v.values[0, 0])
        assert v.values[1, 0] == 5.0
        assert v.values[2, 0] == 5.0
