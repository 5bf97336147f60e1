import csv
import json
import math

import numpy as np
import pytest

from dcsrd import cli, experiments
from dcsrd.experiments import (
    CSV_HEADER,
    ConfigError,
    RDCurve,
    SweepConfig,
    derive_seed,
    horizontal_gaps,
    rd_slope,
    run_sweep,
)
from dcsrd.model import PairSpec, RDPoint
from dcsrd.reconstruct import SolverError

SMALL = PairSpec(128, 4, 2, 2, var_c=1.0, var_i1=0.1, var_i2=0.1)


def small_config(**kw):
    base = dict(
        pair_spec=SMALL,
        m=48,
        delta_grid=(0.005, 0.01, 0.02, 0.04),
        trials=6,
        master_seed=1,
        scenarios=("meas", "meas-cond", "ir-oracle", "jr-oracle", "bpdn-ir", "intersect-jr"),
        flavor="both",
    )
    base.update(kw)
    return SweepConfig(**base)


def write_config(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return str(p)


# -- configuration -----------------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = small_config()
    assert SweepConfig.load(write_config(tmp_path, cfg)) == cfg


@pytest.mark.parametrize(
    "patch",
    [
        {"delta_grid": [0.02, 0.01]},
        {"delta_grid": [0.0, 0.01]},
        {"delta_grid": []},
        {"trials": 0},
        {"scenarios": ["meas", "nope"]},
        {"flavor": "both-ish"},
        {"schema_version": 99},
        {"surprise": 1},
        {"m": 500},
        {"entropy_correction": "jackknife"},
    ],
)
def test_config_errors(tmp_path, patch):
    d = small_config().to_dict()
    d.update(patch)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ConfigError):
        SweepConfig.load(str(p))


def test_config_oracle_dimension_check():
    with pytest.raises(ConfigError):
        small_config(m=9, scenarios=("ir-oracle",))


def test_config_bad_pair_spec(tmp_path):
    d = small_config().to_dict()
    d["pair_spec"]["k_c"] = -1
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(ConfigError):
        SweepConfig.load(str(p))


def test_shipped_configs_load():
    import glob
    import os

    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    paths = glob.glob(os.path.join(root, "*.json"))
    assert paths
    for p in paths:
        SweepConfig.load(p)


# -- seeds ------------------------------------------------------------------------------


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, 0, 0) == derive_seed(0, 0, 0)
    seeds = {derive_seed(s, t, k) for s in range(3) for t in range(50) for k in range(3)}
    assert len(seeds) == 3 * 50 * 3


# -- curve analysis ---------------------------------------------------------------------------


def _curve(rates, dist, scen="meas"):
    pts = [RDPoint(r, d, scen) for r, d in zip(rates, dist)]
    return RDCurve(scen, pts, "empirical", list(range(len(pts))), [1] * len(pts))


def test_horizontal_gap_of_shifted_curve():
    r = np.linspace(0, 10, 41)
    right = _curve(r, 2.0 ** (-2 * r))
    left = _curve(r, 2.0 ** (-2 * (r + 1.7)))
    lr, g = horizontal_gaps(left, right, (3, 6))
    assert lr.min() >= 3 and lr.max() <= 6 and g.size == 13
    np.testing.assert_allclose(g, 1.7, atol=1e-12)


def test_rd_slope():
    r = np.linspace(0, 8, 9)
    assert rd_slope(_curve(r, 5 * 2.0 ** (-2 * r)), (3, 5)) == pytest.approx(-2.0)
    assert math.isnan(rd_slope(_curve(r, 2.0 ** -r), (3.1, 3.2)))


def test_curve_sorted_by_rate():
    c = _curve([3.0, 1.0, 2.0], [0.1, 0.3, 0.2]).sorted()
    assert [p.rate for p in c.points] == [1.0, 2.0, 3.0]
    assert c.deltas == [1, 2, 0]


# -- sweeps ------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_result():
    return run_sweep(small_config(), keep_records=True)


def test_sweep_curves(small_result):
    cfg = small_result.config
    for s in cfg.scenarios:
        curves = small_result.curves[s]
        assert [c.provenance for c in curves] == ["empirical", "closed-form-info", "closed-form-ec"]
        emp = curves[0]
        assert np.all(np.diff(emp.rates) >= 0)
        assert np.all(emp.distortions > 0)
        if s not in experiments.CONDITIONAL:
            # conditional estimates saturate at this tiny sample size, so only
            # the unconditional curves are guaranteed monotone here
            assert np.all(np.diff(emp.distortions) <= 0)
    # conditional rates never exceed unconditional ones
    assert np.all(np.array(small_result.rates_cond) <= np.array(small_result.rates_uncond))


def test_sweep_records(small_result):
    cfg = small_result.config
    recs = small_result.records
    assert len(recs) == cfg.trials * len(cfg.delta_grid) * len(cfg.scenarios)
    for r in recs:
        assert r.rate_estimate >= 0 and r.measurement_mse >= 0 and r.reconstruction_mse >= 0


def test_meas_distortion_is_quantizer_noise(small_result):
    emp = small_result.empirical("meas")
    for d, dist in zip(emp.deltas, emp.distortions):
        assert dist == pytest.approx(d * d / 12, rel=0.25)


def test_summary_contents(small_result):
    s = small_result.summary
    assert s["schema_version"] == 1
    assert s["formula"]["r_star"] == pytest.approx(
        0.5 * math.log2(1 / (1 - s["formula"]["rho12"] ** 2)))
    assert set(s["estimates"]) == {"r_star", "r_jr", "practical_gain"}
    json.dumps(s)


def test_reduction_independent_of_partition(monkeypatch):
    cfg = small_config(trials=9, scenarios=("meas", "meas-cond", "ir-oracle", "bpdn-ir"))
    a = run_sweep(cfg)
    monkeypatch.setattr(experiments, "_CHUNK", 2)
    b = run_sweep(cfg)
    for s in cfg.scenarios:
        assert experiments.curve_csv(a.curves[s]) == experiments.curve_csv(b.curves[s])


def test_single_trial_csv_bit_identical(tmp_path):
    cfg = small_config(trials=1)
    outs = []
    for k in range(2):
        res = run_sweep(cfg)
        d = tmp_path / f"run{k}"
        experiments.write_outputs(res, str(d))
        outs.append({s: (d / f"{s}.csv").read_bytes() for s in cfg.scenarios})
    assert outs[0] == outs[1]


def test_csv_format(tmp_path, small_result):
    experiments.write_outputs(small_result, str(tmp_path))
    with open(tmp_path / "meas.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER
    for row in rows[1:]:
        mse, db = float(row[1]), float(row[2])
        assert db == pytest.approx(10 * math.log10(mse), abs=1e-9)
    assert {r[5] for r in rows[1:]} == {"empirical", "closed-form-info", "closed-form-ec"}
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "trials.csv").exists()


def test_entropy_cap_limits_pooled_trials():
    cfg = small_config(trials=6, entropy_cap=96, scenarios=("meas",))
    assert cfg.entropy_trials == 2
    capped = run_sweep(cfg)
    full = run_sweep(small_config(trials=2, scenarios=("meas",)))
    assert capped.rates_uncond == full.rates_uncond


def test_decoder_failures_abort(monkeypatch):
    def broken(*a, **k):
        raise SolverError("forced", 1.0, 0.5)

    monkeypatch.setattr(experiments, "bpdn_solve", broken)
    with pytest.raises(experiments.DecoderFailureError) as exc:
        run_sweep(small_config(scenarios=("meas", "bpdn-ir")))
    assert len(exc.value.failures) == 6 * 4


def test_rare_failures_are_logged_not_fatal(monkeypatch):
    real = experiments.bpdn_solve
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        if calls["n"] == 3:
            raise SolverError("forced", 1.0, 0.5)
        return real(*a, **k)

    monkeypatch.setattr(experiments, "bpdn_solve", flaky)
    cfg = small_config(trials=30, delta_grid=(0.01, 0.02, 0.04, 0.08), scenarios=("bpdn-ir",))
    res = run_sweep(cfg)
    assert res.summary["failures"]["counts"] == {"bpdn-ir": 1}
    assert sum(res.empirical("bpdn-ir").n_trials) == 30 * 4 - 1


# -- closed-form curves ----------------------------------------------------------------------


def test_closed_form_curves_match_model():
    cfg = small_config()
    curves = experiments.closed_form_curves(cfg)
    ec = next(c for c in curves["meas"] if c.provenance == "closed-form-ec")
    from dcsrd import model

    st = model.measurement_stats(cfg.pair_spec, cfg.m)
    for p in ec.points:
        assert p.distortion == pytest.approx(model.rd_gaussian(st.var_y1, p.rate, "ec"))


# -- CLI ----------------------------------------------------------------------------------


def test_cli_audit_ok(capsys):
    assert cli.main(["audit"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["curves", "--config", str(p)]) == 2


def test_cli_curves(tmp_path, capsys):
    path = write_config(tmp_path, small_config())
    assert cli.main(["curves", "--config", path]) == 0
    out = capsys.readouterr().out
    assert "# meas" in out and ",".join(CSV_HEADER) in out
    assert cli.main(["curves", "--config", path, "--out", str(tmp_path / "cf")]) == 0
    assert (tmp_path / "cf" / "jr-oracle.csv").exists()


def test_cli_sweep_writes_outputs(tmp_path):
    path = write_config(tmp_path, small_config())
    rc = cli.main(["sweep", "--config", path, "--out", str(tmp_path / "o"), "--trials", "3", "--seed", "4"])
    assert rc in (0, 3)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["trials"] == 3 and summary["config"]["master_seed"] == 4
    assert rc == (0 if summary["all_pass"] else 3)


def test_cli_decoder_failure_exit(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise SolverError("forced", 1.0, 0.5)

    monkeypatch.setattr(experiments, "bpdn_solve", broken)
    path = write_config(tmp_path, small_config(scenarios=("bpdn-ir",)))
    assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / "o")]) == 4


def test_cli_workers_identical(tmp_path):
    path = write_config(tmp_path, small_config(trials=130, scenarios=("meas", "meas-cond", "ir-oracle")))
    a, b = tmp_path / "w1", tmp_path / "w2"
    cli.main(["sweep", "--config", path, "--out", str(a), "--workers", "1"])
    cli.main(["sweep", "--config", path, "--out", str(b), "--workers", "2"])
    for name in ("meas.csv", "meas-cond.csv", "ir-oracle.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


# -- synthetic-noise helpers -----------------------------------------------------------------


def test_uniform_noise_marginals():
    rng = np.random.default_rng(0)
    for ar in (0.0, 0.9):
        x = np.array([experiments.uniform_noise(64, 2.0, rng, ar) for _ in range(3000)])
        assert x.var() == pytest.approx(2.0, rel=0.03)
        assert np.abs(x).max() <= math.sqrt(6.0)
    corr = np.corrcoef(x[:, 5], x[:, 6])[0, 1]
    assert corr > 0.8


def test_pinv_wishart_trace_small():
    mean, vals = experiments.pinv_wishart_trace(4, 40, 4000, master_seed=2)
    assert mean == pytest.approx(4 / 35, rel=0.03)
    assert vals.shape == (4000,)
