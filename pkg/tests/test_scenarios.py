import numpy as np
import pytest

from scenprice import (
    GbmParams,
    ScenarioKind,
    TimeGrid,
    generate_gbm_dispersed,
    generate_gbm_fixed,
    generate_gbm_forked,
    import_physical,
    import_scenarios,
    validate_alignment,
)
from scenprice.errors import (
    GridMismatch,
    InvalidArgument,
    InvalidTimeGrid,
    InvalidValue,
    MalformedScenarioData,
)
from scenprice.refdata import GRID_P, GRID_Q, PHYSICAL_TABLE, physical_set
from scenprice.scenarios import backfill_fork_prefixes, concat


GRID4 = TimeGrid(np.array([0.0, 1.0, 2.0, 3.0]))


def doc_from_table(times, table, first_index=None):
    rows = []
    for w in range(table.shape[0]):
        start = 0 if first_index is None else int(first_index[w])
        for k in range(start, table.shape[1]):
            rows.append([w + 1, k, float(table[w, k])])
    return {"grid": {"times": list(times)}, "rows": rows}


class TestTimeGrid:
    def test_minimal(self):
        g = TimeGrid([0.0])
        assert len(g) == 1

    def test_strictly_increasing_required(self):
        with pytest.raises(InvalidTimeGrid):
            TimeGrid([0.0, 1.0, 1.0])
        with pytest.raises(InvalidTimeGrid):
            TimeGrid([1.0, 0.5])
        with pytest.raises(InvalidTimeGrid):
            TimeGrid([])

    def test_index_of(self):
        assert GRID_Q.index_of(2.0) == 2
        with pytest.raises(GridMismatch):
            GRID_Q.index_of(1.5)


class TestImport:
    def test_paper_table(self):
        s = physical_set()
        assert s.n_scenarios == 3
        assert s.n_factors == 1
        assert s.values[1, 0, 0] == 110.0
        assert np.all(s.activation == 0)

    def test_single_cell(self):
        s = import_physical({"grid": {"times": [0.0]}, "rows": [[1, 0, 100.0]]})
        assert s.n_scenarios == 1
        assert s.activation[0] == 0

    def test_missing_cell_rejected(self):
        doc = doc_from_table(GRID_P.times, PHYSICAL_TABLE)
        doc["rows"] = [r for r in doc["rows"] if not (r[0] == 2 and r[1] == 1)]
        with pytest.raises(MalformedScenarioData):
            import_physical(doc)

    def test_blank_csv_cell_rejected(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("scenario,time_index,factor_0\n1,0,100.0\n1,1,\n")
        with pytest.raises(MalformedScenarioData):
            import_physical(p, TimeGrid([0.0, 1.0]))

    def test_non_finite_rejected(self):
        doc = {"grid": {"times": [0.0]}, "rows": [[1, 0, float("inf")]]}
        with pytest.raises(InvalidValue):
            import_physical(doc)

    def test_noncontiguous_ids_rejected(self):
        doc = {"grid": {"times": [0.0]}, "rows": [[1, 0, 1.0], [3, 0, 1.0]]}
        with pytest.raises(MalformedScenarioData):
            import_physical(doc)

    def test_csv_round_trip(self, tmp_path):
        from scenprice.scenarios import export_csv

        s = physical_set()
        path = tmp_path / "p.csv"
        export_csv(path, s)
        back = import_physical(path, GRID_P)
        assert np.array_equal(back.values, s.values)

    def test_riskneutral_gap_rejected(self):
        # row present at t0 and t2 but not t1
        doc = {"grid": {"times": [0.0, 1.0, 2.0]},
               "rows": [[1, 0, 1.0], [1, 2, 1.0]]}
        with pytest.raises(MalformedScenarioData):
            import_scenarios(doc, kind=ScenarioKind.RISK_NEUTRAL)


class TestGenerateFixed:
    def test_zero_scenarios_rejected(self):
        with pytest.raises(InvalidArgument):
            generate_gbm_fixed(GbmParams(100.0, 0.0, 0.2, seed=1), GRID4, 0)

    def test_tiny_vol_is_constant(self):
        params = GbmParams(100.0, 0.0, 1e-12, seed=3)
        s = generate_gbm_fixed(params, GRID4, 8)
        assert np.allclose(s.values, 100.0, rtol=1e-9)

    def test_same_seed_bit_identical(self):
        params = GbmParams(100.0, 0.05, 0.5, seed=42)
        a = generate_gbm_fixed(params, GRID4, 64)
        b = generate_gbm_fixed(params, GRID4, 64)
        assert np.array_equal(a.values, b.values)

    def test_path_invariant_under_scenario_count(self):
        params = GbmParams(100.0, 0.05, 0.5, seed=42)
        small = generate_gbm_fixed(params, GRID4, 16)
        big = generate_gbm_fixed(params, GRID4, 64)
        assert np.array_equal(big.values[:, :16, :], small.values)

    def test_positivity(self):
        params = GbmParams(100.0, -0.5, 1.5, seed=9)
        s = generate_gbm_fixed(params, GRID4, 500)
        assert np.all(s.values > 0)

    def test_log_increment_moments(self):
        # mean (mu - sigma^2/2) dt = -0.125, variance sigma^2 dt = 0.25
        params = GbmParams(100.0, 0.0, 0.5, seed=1234)
        s = generate_gbm_fixed(params, TimeGrid([0.0, 1.0]), 100_000)
        inc = np.log(s.values[1, :, 0] / s.values[0, :, 0])
        se = 0.5 / np.sqrt(100_000)
        assert abs(inc.mean() - (-0.125)) < 4 * se
        assert abs(inc.var(ddof=1) - 0.25) < 0.05 * 0.25


class TestGenerateDispersed:
    def test_starts_respected(self):
        params = GbmParams(100.0, 0.0, 0.2, seed=5)
        starts = [80.0, 90.0, 100.0, 110.0, 120.0]
        s = generate_gbm_dispersed(params, GRID4, starts)
        assert np.array_equal(s.values[0, :, 0], starts)
        assert np.all(s.activation == 0)

    def test_single_constant_path(self):
        s = generate_gbm_dispersed(GbmParams(1.0, 0.0, 1e-12, seed=0), GRID4, [100.0])
        assert np.allclose(s.values, 100.0, rtol=1e-9)

    def test_wide_starts_positive(self):
        s = generate_gbm_dispersed(GbmParams(1.0, 0.0, 0.4, seed=7), GRID4, [50.0, 150.0])
        assert s.values[0, 0, 0] == 50.0
        assert s.values[0, 1, 0] == 150.0
        assert np.all(np.isfinite(s.values[s.active_mask]))
        assert np.all(s.values[s.active_mask] > 0)

    def test_nonpositive_start_rejected(self):
        with pytest.raises(InvalidArgument):
            generate_gbm_dispersed(GbmParams(1.0, 0.0, 0.2), GRID4, [100.0, -5.0])


class TestGenerateForked:
    @pytest.fixture
    def physical(self):
        return physical_set()

    def test_fork_at_t1(self, physical):
        params = GbmParams(100.0, 0.0, 0.3, seed=21)
        s = generate_gbm_forked(params, GRID_Q, physical, [(0, 1, 1), (1, 1, 1), (2, 1, 1)])
        assert np.array_equal(s.values[1, :, 0], [110.0, 100.0, 90.0])
        assert np.all(s.activation == 1)
        assert np.all(np.isnan(s.values[0, :, 0]))

    def test_fork_at_t2_no_earlier_values(self, physical):
        params = GbmParams(100.0, 0.0, 0.3, seed=22)
        s = generate_gbm_forked(params, GRID_Q, physical, [(0, 2, 1), (1, 2, 1), (2, 2, 1)])
        assert np.array_equal(s.values[2, :, 0], [120.0, 100.0, 80.0])
        assert np.all(np.isnan(s.values[:2, :, 0]))

    def test_fork_at_final_time_single_point(self, physical):
        # physical grid extended so the last q time exists on it
        grid_p = TimeGrid([0.0, 1.0, 2.0, 3.0])
        table = np.hstack([PHYSICAL_TABLE, [[130.0], [100.0], [70.0]]])
        phys = import_physical(doc_from_table(grid_p.times, table))
        s = generate_gbm_forked(GbmParams(100.0, 0.0, 0.2, seed=4), GRID_Q, phys, [(0, 3, 2)])
        assert np.all(s.activation == 3)
        assert np.array_equal(s.values[3, :, 0], [130.0, 130.0])

    def test_fork_exactness_bitwise(self, physical):
        params = GbmParams(100.0, 0.0, 0.3, seed=23)
        s = generate_gbm_forked(params, GRID_Q, physical, [(1, 1, 3)])
        assert all(s.values[1, w, 0] == physical.values[1, 1, 0] for w in range(3))

    def test_fork_time_not_on_physical_grid(self, physical):
        grid = TimeGrid([0.0, 0.5, 1.0])
        with pytest.raises(GridMismatch):
            generate_gbm_forked(GbmParams(100.0, 0.0, 0.2), grid, physical, [(0, 1, 1)])

    def test_replay_prefix(self, physical):
        params = GbmParams(100.0, 0.0, 0.3, seed=24)
        s = generate_gbm_forked(params, GRID_Q, physical, [(2, 2, 1)], prefix="replay")
        assert s.activation[0] == 0
        assert np.array_equal(s.values[:3, 0, 0], PHYSICAL_TABLE[2])

    def test_backfill_requires_match(self, physical):
        from scenprice.errors import UninitializableForkState
        from scenprice.scenarios import ScenarioSet

        values = np.full((4, 1, 1), np.nan)
        values[1:, 0, 0] = [111.0, 112.0, 113.0]  # 111 matches no physical path at t1
        odd = ScenarioSet(GRID_Q, values, np.array([1]), ScenarioKind.RISK_NEUTRAL)
        with pytest.raises(UninitializableForkState):
            backfill_fork_prefixes(odd, physical)


class TestConcatAndAlignment:
    def test_concat_matches_blocks(self):
        params = GbmParams(100.0, 0.0, 0.2, seed=31)
        a = generate_gbm_fixed(params, GRID4, 3)
        b = generate_gbm_fixed(params, GRID4, 5, stream_offset=3)
        c = concat([a, b])
        assert c.n_scenarios == 8
        assert np.array_equal(c.values[:, :3], a.values)
        # block b used distinct substreams
        assert not np.array_equal(c.values[:, 3:6], a.values)

    def test_alignment_aligned(self):
        p = physical_set()
        q = generate_gbm_fixed(GbmParams(100.0, 0.0, 0.2, seed=1), GRID_Q, 2)
        report = validate_alignment(p, q)
        assert report.aligned
        assert report.time_index_map == {0: 0, 1: 1, 2: 2}

    def test_alignment_missing_time(self):
        doc = {"grid": {"times": [0.0, 1.5]}, "rows": [[1, 0, 100.0], [1, 1, 100.0]]}
        p = import_physical(doc)
        q = generate_gbm_fixed(GbmParams(100.0, 0.0, 0.2, seed=1), GRID4, 2)
        report = validate_alignment(p, q)
        assert not report.aligned
        assert report.missing_times == (1.5,)

    def test_alignment_identical_grids(self):
        p = physical_set()
        q = generate_gbm_fixed(GbmParams(100.0, 0.0, 0.2, seed=1), GRID_P, 2)
        assert validate_alignment(p, q).aligned


class TestGbmParams:
    def test_correlation_validation(self):
        with pytest.raises(InvalidArgument):
            GbmParams([100, 100], 0.0, [0.2, 0.3],
                      correlation=np.array([[1.0, 0.5], [0.4, 1.0]]))
        with pytest.raises(InvalidArgument):
            GbmParams([100, 100], 0.0, [0.2, 0.3],
                      correlation=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_correlated_factors(self):
        corr = np.array([[1.0, 0.9], [0.9, 1.0]])
        params = GbmParams([100.0, 100.0], 0.0, [0.2, 0.2], correlation=corr, seed=8)
        s = generate_gbm_fixed(params, TimeGrid([0.0, 1.0]), 20_000)
        inc = np.log(s.values[1] / s.values[0])
        sample_corr = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
        assert abs(sample_corr - 0.9) < 0.02

    def test_volatility_positive(self):
        with pytest.raises(InvalidArgument):
            GbmParams(100.0, 0.0, 0.0)

    def test_activation_discipline(self):
        q = generate_gbm_forked(GbmParams(100.0, 0.0, 0.2, seed=2), GRID_Q,
                                physical_set(), [(0, 1, 2), (1, 2, 2)])
        mask = q.active_mask
        assert np.all(np.isfinite(q.values[mask]))
        assert np.all(np.isnan(q.values[~mask]))
