import numpy as np
import pytest

from scenprice import (
    BasisSpec,
    DiscountModel,
    ProductKind,
    ProductSpec,
    SmootherKind,
    accumulate_remaining_value,
    compute_cashflows,
    compute_state_table,
    fit,
    load_run,
    parse_config,
    persist_run,
    refit_from_artifact,
    run_pipeline,
)
from scenprice.engine import load_run as engine_load_run
from scenprice.errors import ConfigError, IncompatibleArtifact, PipelineError
from scenprice.refdata import GRID_P, GRID_Q, PHYSICAL_TABLE, Q_FIXED_TABLE
from scenprice.scenarios import import_physical, import_scenarios, ScenarioKind


def physical_doc(times=None, table=None):
    times = list(times) if times is not None else [0.0, 1.0, 2.0]
    table = table if table is not None else PHYSICAL_TABLE
    rows = [[w + 1, k, float(table[w, k])]
            for w in range(table.shape[0]) for k in range(len(times))]
    return {"grid": {"times": times}, "rows": rows}


def q_doc():
    rows = [[w + 1, k, float(Q_FIXED_TABLE[w, k])]
            for w in range(5) for k in range(4)]
    return {"grid": {"times": [0.0, 1.0, 2.0, 3.0]}, "rows": rows}


def reference_config(**overrides):
    doc = {
        "grid_p": {"times": [0.0, 1.0, 2.0]},
        "grid_q": {"times": [0.0, 1.0, 2.0, 3.0]},
        "physical": {"inline": physical_doc()},
        "riskneutral": {"mode": "import", "inline": q_doc()},
        "product": {"kind": "european_call", "strike": 100.0, "maturity_index": 3,
                    "underlying_factor": 0},
        "discount": {"kind": "flat", "rate": 0.0, "base": "valuation_time"},
        "smoother": {"kind": "polynomial_per_timestep",
                     "basis": {"degree": 2, "cross_terms": True}},
    }
    doc.update(overrides)
    return doc


def gbm_config(n=4000, seed=7, degree=4, **overrides):
    doc = reference_config(**overrides)
    doc["riskneutral"] = {"mode": "fixed", "n_scenarios": n,
                          "gbm": {"initial_value": 100.0, "drift": 0.0,
                                  "volatility": 0.2, "seed": seed}}
    doc["smoother"] = {"kind": "polynomial_per_timestep",
                       "basis": {"degree": degree, "cross_terms": True}}
    return doc


class TestRunPipeline:
    def test_reference_european_prices(self):
        result = run_pipeline(parse_config(reference_config()))
        assert np.allclose(result.price_table.values[1], [54.57, 22.01, -16.87],
                           atol=0.02)
        assert np.allclose(result.price_table.values[2], [49.77, 30.17, 5.90],
                           atol=0.02)

    def test_deterministic_with_seed(self):
        a = run_pipeline(parse_config(gbm_config()))
        b = run_pipeline(parse_config(gbm_config()))
        assert np.array_equal(a.price_table.values, b.price_table.values)

    def test_decomposition_equivalence(self):
        config = parse_config(reference_config())
        result = run_pipeline(config)
        # compose the stages by hand
        physical = import_physical(config.physical_source, config.grid_p)
        q = import_scenarios(q_doc(), kind=ScenarioKind.RISK_NEUTRAL)
        p_states = compute_state_table(config.product, physical)
        q_states = compute_state_table(config.product, q)
        cf = compute_cashflows(config.product, q, q_states)
        values = accumulate_remaining_value(cf, config.discount, config.discount_base)
        sm = fit(q, q_states, values, config.smoother_kind, config.basis,
                 times=[0, 1, 2])
        for k in range(3):
            manual, _, _ = sm.evaluate_batch(float(GRID_P.times[k]),
                                             physical.values[k], p_states.values[k])
            assert np.array_equal(manual, result.price_table.values[k])

    def test_zero_vol_prices_are_intrinsic(self):
        doc = gbm_config(n=50, degree=2)
        # small enough that the per-step multiplier rounds to exactly 1.0:
        # the simulation is bitwise deterministic at 100
        doc["riskneutral"]["gbm"]["volatility"] = 1e-300
        doc["product"]["strike"] = 80.0
        # at-the-money-forward physical scenarios sit on the deterministic path
        doc["physical"] = {"inline": physical_doc(table=np.full((3, 3), 100.0))}
        result = run_pipeline(parse_config(doc))
        assert np.all(result.q_scenarios.values == 100.0)
        # every valuation collapses to the deterministic path's intrinsic 20
        assert np.allclose(result.price_table.values, 20.0, atol=1e-9)

    def test_misaligned_grid_refused(self):
        doc = reference_config(grid_p={"times": [0.0, 1.5, 2.0]})
        doc["physical"] = {"inline": physical_doc(times=[0.0, 1.5, 2.0])}
        with pytest.raises(PipelineError) as exc:
            run_pipeline(parse_config(doc))
        assert exc.value.stage == "generate_riskneutral"
        assert "1.5" in str(exc.value)

    def test_post_maturity_prices_zero(self):
        doc = reference_config(grid_p={"times": [0.0, 1.0, 2.0, 4.0]})
        table = np.hstack([PHYSICAL_TABLE, [[125.0], [100.0], [75.0]]])
        doc["physical"] = {"inline": physical_doc([0.0, 1.0, 2.0, 4.0], table)}
        result = run_pipeline(parse_config(doc))
        assert np.all(result.price_table.values[3] == 0.0)
        assert np.allclose(result.price_table.values[1], [54.57, 22.01, -16.87],
                           atol=0.02)

    def test_complexity_counters(self):
        small = run_pipeline(parse_config(gbm_config()))
        table6 = np.vstack([PHYSICAL_TABLE, PHYSICAL_TABLE])
        doc = gbm_config()
        doc["physical"] = {"inline": physical_doc(table=table6)}
        big = run_pipeline(parse_config(doc))
        # simulation work independent of the physical count
        assert big.counters.sim_steps == small.counters.sim_steps
        # evaluation work scales with it
        assert big.counters.eval_points == 2 * small.counters.eval_points
        assert big.counters.eval_basis_evals == 2 * small.counters.eval_basis_evals

    def test_extrapolation_flagged(self):
        doc = gbm_config(n=60, degree=2)
        table = np.array([[100.0, 1000.0, 1000.0],
                          [100.0, 100.0, 100.0],
                          [100.0, 90.0, 80.0]])
        doc["physical"] = {"inline": physical_doc(table=table)}
        result = run_pipeline(parse_config(doc))
        assert result.price_table.extrapolated[1, 0]
        assert not result.price_table.extrapolated[1, 1]

    def test_stage_identified_on_config_error(self):
        doc = reference_config()
        doc["physical"] = {"file": "/nonexistent/path.csv"}
        with pytest.raises(PipelineError) as exc:
            run_pipeline(parse_config(doc))
        assert exc.value.stage == "import_physical"


class TestConfig:
    def test_negative_strike_names_field(self):
        doc = reference_config()
        doc["product"]["strike"] = -5.0
        with pytest.raises(ConfigError, match="product.strike"):
            parse_config(doc)

    def test_missing_riskneutral(self):
        doc = reference_config()
        del doc["riskneutral"]
        with pytest.raises(ConfigError, match="riskneutral"):
            parse_config(doc)

    def test_maturity_outside_grid(self):
        doc = reference_config()
        doc["product"]["maturity_index"] = 17
        with pytest.raises(ConfigError, match="maturity_index"):
            parse_config(doc)

    def test_bad_smoother_kind(self):
        doc = reference_config()
        doc["smoother"] = {"kind": "spline"}
        with pytest.raises(ConfigError, match="smoother.kind"):
            parse_config(doc)

    def test_digest_stable(self):
        a = parse_config(reference_config())
        b = parse_config(reference_config())
        assert a.digest() == b.digest()


class TestPersistence:
    def test_round_trip_reevaluation_bit_exact(self, tmp_path):
        config = parse_config(gbm_config(n=500))
        result = run_pipeline(config)
        persist_run(result.q_scenarios, result.q_states, result.smoother,
                    tmp_path / "artifact", {"seed": 7})
        loaded = load_run(tmp_path / "artifact")
        assert np.array_equal(loaded.q_scenarios.values, result.q_scenarios.values,
                              equal_nan=True)
        assert np.array_equal(loaded.q_states.values, result.q_states.values,
                              equal_nan=True)
        physical = import_physical(config.physical_source, config.grid_p)
        p_states = compute_state_table(config.product, physical)
        for k in range(3):
            row, _, _ = loaded.smoother.evaluate_batch(
                float(config.grid_p.times[k]), physical.values[k], p_states.values[k])
            assert np.array_equal(row, result.price_table.values[k])

    def test_refit_without_simulation(self, tmp_path):
        config = parse_config(gbm_config(n=500, degree=2))
        result = run_pipeline(config)
        persist_run(result.q_scenarios, result.q_states, result.smoother,
                    tmp_path / "artifact", {})
        loaded = load_run(tmp_path / "artifact")
        refit = refit_from_artifact(loaded, config.product, config.discount,
                                    basis=BasisSpec(degree=3), times=[1, 2])
        assert refit.fits[0].coefficients.size == 4  # cubic now
        direct = fit(result.q_scenarios, result.q_states,
                     accumulate_remaining_value(
                         compute_cashflows(config.product, result.q_scenarios,
                                           result.q_states),
                         config.discount),
                     SmootherKind.POLYNOMIAL_PER_TIMESTEP,
                     BasisSpec(degree=3), times=[1, 2])
        for a, b in zip(refit.fits, direct.fits):
            assert np.array_equal(a.coefficients, b.coefficients)

    def test_load_smoother_only_prices_new_scenario(self, tmp_path):
        from scenprice import load_smoother, save_smoother

        config = parse_config(reference_config())
        result = run_pipeline(config)
        save_smoother(tmp_path / "smoother.json", result.smoother)
        sm = load_smoother(tmp_path / "smoother.json")
        price = sm.evaluate(1.0, 105.0)
        f = next(ft for ft in sm.fits if ft.time_index == 1)
        expected = f.coefficients @ np.array([1.0, 105.0, 105.0**2])
        assert price == expected

    def test_version_mismatch(self, tmp_path):
        config = parse_config(gbm_config(n=50))
        result = run_pipeline(config)
        persist_run(result.q_scenarios, result.q_states, result.smoother,
                    tmp_path / "artifact", {})
        manifest = tmp_path / "artifact" / "manifest.json"
        doc = manifest.read_text().replace('"artifact_version": 1',
                                           '"artifact_version": 42')
        manifest.write_text(doc)
        with pytest.raises(IncompatibleArtifact):
            engine_load_run(tmp_path / "artifact")
