import json

import numpy as np
import pytest

from steadydiff.errors import AdmissibilityError, InsufficientDataError, ModelSpecError
from steadydiff.lab import ExperimentConfig, GapRow, ergodicity_decay, fit_rate, run_decay_study, run_gap_study


def mm_inf_config(**over):
    doc = {
        "schema": "steadydiff-experiment/1",
        "model": {"schema": "steadydiff-model/1", "zoo": "mm_inf", "params": {"mu": 1.0}},
        "n_grid": [100, 1000, 10000],
        "functions": {"x3": "x1**3"},
        "seeds": {"validation": 0, "simulation": 1},
        "lyapunov": {"candidate": "radial", "rho": 20, "m": 2, "delta_trial": 0.5, "outer_radius": 10},
    }
    doc.update(over)
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# rate fits


@pytest.mark.parametrize("power", [0.5, 1.0, 0.0])
def test_fit_rate_recovers_exact_power(power):
    ns = [50.0, 100.0, 200.0, 400.0]
    fit = fit_rate([(n, 3.0 * n ** -power) for n in ns])
    assert fit["slope"] == pytest.approx(-power, abs=1e-12)
    assert fit["intercept"] == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit["stderr"] < 1e-10


def test_fit_rate_matches_numpy_polyfit():
    rng = np.random.default_rng(0)
    ns = np.array([50.0, 100.0, 200.0, 400.0, 800.0])
    gaps = ns ** -0.5 * np.exp(0.05 * rng.standard_normal(ns.size))
    fit = fit_rate(list(zip(ns, gaps)))
    slope, intercept = np.polyfit(np.log(ns), np.log(gaps), 1)
    assert fit["slope"] == pytest.approx(slope, rel=1e-10)
    assert fit["intercept"] == pytest.approx(intercept, rel=1e-10)


def test_fit_rate_needs_three_nonzero_rows():
    with pytest.raises(InsufficientDataError):
        fit_rate([(10.0, 0.1), (20.0, 0.05)])
    with pytest.raises(InsufficientDataError):
        fit_rate([(10.0, 0.1), (20.0, 0.05), (40.0, 0.0)])
    fit = fit_rate([(10.0, 0.1), (20.0, 0.05), (40.0, 0.0), (80.0, 0.0125)])
    assert fit["rows_used"] == [10.0, 20.0, 80.0]
    assert any("40" in note for note in fit["notes"])


def test_row_admissibility_uses_budget_fraction():
    row = GapRow("f", 100.0, 1.0, 0.9, 0.1, 1.0, {"total": 0.005}, {})
    assert row.admissible(0.1)
    assert not row.admissible(0.01)
    assert not GapRow("f", 100.0, 1.0, 1.0, 0.0, 0.0, {"total": 0.0}, {}).admissible()


# ---------------------------------------------------------------------------
# configuration


def test_config_validation():
    with pytest.raises(ModelSpecError, match="increasing"):
        mm_inf_config(n_grid=[100, 100, 200])
    with pytest.raises(ModelSpecError, match="seeds"):
        mm_inf_config(seeds={})
    with pytest.raises(ModelSpecError, match="unknown"):
        mm_inf_config(colour="blue")
    with pytest.raises(ModelSpecError, match="schema"):
        mm_inf_config(schema="other/1")


def test_config_round_trip_from_yaml(tmp_path):
    import yaml

    doc = {"schema": "steadydiff-experiment/1", "model": {"schema": "steadydiff-model/1", "zoo": "mm_inf",
                                                          "params": {"mu": 2.0}},
           "n_grid": [10, 20, 40], "functions": ["x1"], "seeds": {"simulation": 3}}
    p = tmp_path / "exp.yaml"
    p.write_text(yaml.safe_dump(doc))
    cfg = ExperimentConfig.load(p)
    assert cfg.n_grid == [10.0, 20.0, 40.0]
    assert cfg.functions == {"x1": "x1"}
    assert cfg.tolerances["mass_tol"] == 1e-10
    assert cfg.model_spec().center_at(10.0)[0] == pytest.approx(5.0)


def test_inadmissible_function_is_refused():
    # f = x^2 has f_bar > 1 + x^2 near the origin
    cfg = mm_inf_config(functions={"x2": "x1**2"},
                        lyapunov={"candidate": "radial", "rho": 1, "m": 1, "delta_trial": 0.5, "outer_radius": 10})
    with pytest.raises(AdmissibilityError):
        run_gap_study(cfg)


# ---------------------------------------------------------------------------
# gap study


@pytest.fixture(scope="module")
def mm_inf_report():
    return run_gap_study(mm_inf_config())


def test_mm_inf_cubic_gap_is_exact_skewness(mm_inf_report):
    # Poisson(n) has third central moment n; the OU limit is symmetric
    for row in mm_inf_report.rows["x3"]:
        exact = row.n ** -0.5
        assert abs(row.gap - exact) <= row.total_budget
        assert row.total_budget < 0.1 * abs(row.gap)
    fit = mm_inf_report.fits["x3"]
    assert fit["slope"] == pytest.approx(-0.5, abs=1e-6)
    assert mm_inf_report.complete


def test_report_records_hypotheses(mm_inf_report):
    h = mm_inf_report.hypotheses
    assert h["assumptions"]["passed"]
    assert h["ul_certificate"]["delta"] > 0
    assert h["moment_bound"]["verdict"]
    assert all(v["status"] == "attested" for v in h["finite_integral"].values())
    assert h["admissibility"]["x3"]["max_fbar_over_V"] <= 1.0


def test_gap_study_is_deterministic_across_thread_counts(tmp_path):
    a = run_gap_study(mm_inf_config(threads=1)).to_dict()
    b = run_gap_study(mm_inf_config(threads=3, output={"dir": str(tmp_path)})).to_dict()
    assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)
    on_disk = json.loads((tmp_path / "gap_report.json").read_text())
    assert on_disk["schema"] == "steadydiff-gap-report/1"
    lines = (tmp_path / "gap_rows.csv").read_text().splitlines()
    assert lines[0].startswith("# schema:")
    assert len(lines) == 2 + 3


# ---------------------------------------------------------------------------
# ergodicity decay


def test_ou_decay_rate_is_one(ou):
    fits = ergodicity_decay(ou, lambda y: y[..., 0], [[2.0], [-1.5]], [0.5, 1.0, 1.5, 2.0, 2.5], reps=4000,
                            seed=2, pi_f=0.0)
    for ft in fits:
        assert ft.rate == pytest.approx(1.0, abs=0.05)


def test_constant_function_has_no_decay_fit(ou):
    (ft,) = ergodicity_decay(ou, lambda y: np.zeros(y.shape[:-1]), [[1.0]], [0.5, 1.0], reps=100, seed=0,
                             pi_f=0.0)
    assert ft.rate is None
    assert "identically zero" in ft.notes[0]


def test_erlang_a_decay_rates_are_stable_in_n():
    doc = {
        "schema": "steadydiff-experiment/1",
        "model": {"schema": "steadydiff-model/1", "zoo": "erlang_a", "params": {"mu": 1.0, "theta": 0.5}},
        "n_grid": [100, 1000, 10000], "functions": {"x": "x1"}, "seeds": {"simulation": 4},
        "decay": {"f": "x1", "x0": [[2.0]], "t_grid": [0.5, 1.0, 1.5, 2.0], "reps": 2000, "step": 0.01},
    }
    rep = run_decay_study(ExperimentConfig.from_dict(doc))
    rates = [ft["rate"] for row in rep["per_n"] for ft in row["fits"]]
    assert all(r is not None and 0.25 < r < 1.5 for r in rates)
    assert rep["rate_ratio_max_over_min"] <= 2.0
