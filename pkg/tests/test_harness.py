import json
import math

import jsonschema
import numpy as np
import pytest

from sparse_rwre.env import Beta, Constant, Deterministic, EnvSpec
from sparse_rwre.errors import ConfigError, InvalidParam, Misconfigured, TooFewSamples
from sparse_rwre.harness import report as rpt
from sparse_rwre.harness.cli import main
from sparse_rwre.harness.experiments import ExperimentConfig, parse_config, replica_map, run_experiment
from sparse_rwre.harness.stats import (
    bootstrap_se,
    empirical_transform,
    geometric_tail_fit,
    mann_kendall,
    permutation_independence,
    qq_table,
    two_sample_ks,
)
from sparse_rwre.rng import seed_sequence, split

from conftest import lognormal_spec, simple_spec

LADDER_SPEC = {"xi": {"family": "Deterministic", "m": 1}, "lambda": {"family": "Constant", "lam": 2 / 3},
               "coupling": {"type": "Independent"}}
MIXED_SPEC = {"xi": {"family": "UniformInt", "K": 3}, "lambda": {"family": "Beta", "a": 4, "b": 2},
              "coupling": {"type": "Independent"}}


# ---------------------------------------------------------------- statistics


def test_ks_identical_and_disjoint_samples():
    a = split(0, "ks", 0).random(500)
    same = two_sample_ks(a, a)
    assert (same.statistic, same.pvalue) == (0.0, 1.0)
    assert two_sample_ks(a, a + 2.0).statistic == 1.0


def test_ks_needs_enough_samples():
    with pytest.raises(TooFewSamples):
        two_sample_ks(np.arange(10.0), np.arange(100.0))


def test_ks_null_calibration():
    rejections = 0
    for i in range(100):
        draws = split(1, "ks-null", i).random(20_000)
        rejections += two_sample_ks(draws[:10_000], draws[10_000:]).pvalue < 0.01
    assert rejections <= 5


def test_ks_pvalue_matches_scipy():
    from scipy import stats

    a = split(2, "ks", 0).normal(size=3000)
    b = split(2, "ks", 1).normal(0.05, 1.0, size=2000)
    ours = two_sample_ks(a, b)
    ref = stats.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
    assert ours.pvalue == pytest.approx(ref.pvalue, rel=0.05)


def test_empirical_transform_examples():
    rows = empirical_transform(np.zeros(100), [0.5, 1.0, 7.0], "LT")
    assert [r["value"] for r in rows] == [1.0, 1.0, 1.0]
    perp = np.full(1000, 2.0)
    assert empirical_transform(perp, [1.0])[0]["value"] == pytest.approx(math.exp(-2.0), rel=1e-15)
    cf = empirical_transform(np.zeros(10), [3.0], "CF")[0]
    assert cf["value"] == 1 + 0j
    with pytest.raises(InvalidParam):
        empirical_transform(perp, [])
    with pytest.raises(InvalidParam):
        empirical_transform(perp, [1.0], "MGF")


def test_qq_table_rows():
    x = np.arange(1001.0)
    rows = qq_table(x, x)
    assert all(r["sample"] == r["reference"] for r in rows)
    assert rows[4] == {"p": 0.5, "sample": 500.0, "reference": 500.0}


def test_mann_kendall_detects_trend():
    assert mann_kendall(np.arange(20.0))[2] < 0.01
    assert mann_kendall(split(3, "mk", 0).random(20))[2] > 0.01


def test_permutation_test_detects_dependence():
    rng = split(4, "perm", 0)
    x = rng.random(500)
    assert permutation_independence(x, x + 0.1 * rng.random(500), rng) < 0.01


def test_geometric_tail_fit_on_geometric_sample():
    slope, r2 = geometric_tail_fit(split(5, "geo", 0).geometric(0.3, 200_000))
    assert slope == pytest.approx(math.log(0.7), rel=0.05) and r2 > 0.99


def test_bootstrap_se_of_mean():
    x = split(6, "bs", 0).normal(size=10_000)
    assert bootstrap_se(x, split(6, "bs", 1)) == pytest.approx(0.01, rel=0.2)


# ---------------------------------------------------------------- reports


def test_report_round_trip_with_special_values():
    doc = {"a": math.inf, "b": -math.inf, "c": 0.1, "d": [1, 2.5, None], "e": True, "f": np.float64(1 / 3)}
    back = rpt.loads(rpt.dumps(doc))
    assert back["a"] == math.inf and back["b"] == -math.inf and back["c"] == 0.1
    assert back["f"] == 1 / 3
    assert math.isnan(rpt.loads(rpt.dumps({"x": math.nan}))["x"])
    assert rpt.loads(rpt.dumps({"z": 1 + 2j}))["z"] == {"re": 1.0, "im": 2.0}


def test_report_keys_are_sorted():
    text = rpt.dumps({"b": 1, "a": 2})
    assert text.index('"a"') < text.index('"b"')


def test_speed_report(tmp_path):
    cfg = ExperimentConfig("SPEED", 11, simple_spec(), sizes={"n": 20_000, "replicas": 100},
                           outputs={"report": str(tmp_path / "r.json")})
    rep = run_experiment(cfg)
    assert rep["details"]["speed"]["v"] == pytest.approx(1 / 3)
    check = rep["checks"][0]
    assert check["name"] == "mc_X_over_n" and check["expected"] == pytest.approx(1 / 3)
    assert rep["passed"]
    rpt.validate(rep, "report.schema.json")
    assert rpt.loads((tmp_path / "r.json").read_text())["passed"] is True


def test_speed_report_in_first_passage_mode():
    cfg = ExperimentConfig("SPEED", 12, simple_spec(), sizes={"n": 20_000, "replicas": 100}, mode="first_passage")
    rep = run_experiment(cfg)
    assert rep["checks"][0]["expected"] == pytest.approx(3.0) and rep["passed"]


def test_zero_speed_is_informational():
    spec = EnvSpec(Deterministic(1), Beta(1.2, 1.0))  # E rho = inf
    rep = run_experiment(ExperimentConfig("SPEED", 0, spec, sizes={"n": 2000, "replicas": 20}))
    assert rep["details"]["speed"]["v"] == 0.0 and "zero speed" in rep["checks"][0]["note"]


def test_regen_tail_report(tmp_path):
    raw = tmp_path / "regen.jsonl"
    cfg = ExperimentConfig("REGEN_TAIL", 13, lognormal_spec(-0.75), sizes={"cycles": 200_000},
                           outputs={"raw": str(raw)})
    rep = run_experiment(cfg)
    assert rep["hill"]["index_hat"] == pytest.approx(1.5, abs=0.25)
    assert {c["name"] for c in rep["checks"]} >= {"hill_index", "tau_tail_slope", "mean_bar_w"}
    assert len(raw.read_text().splitlines()) == 200_000
    rpt.validate(rep, "report.schema.json")


def test_perpetuity_report():
    rep = run_experiment(ExperimentConfig("PERPETUITY", 14, lognormal_spec(-0.5), sizes={"samples": 200_000}))
    assert rep["hill"]["index_hat"] == pytest.approx(1.0, abs=0.2)
    rpt.validate(rep, "report.schema.json")


def test_critgw_report():
    cfg = ExperimentConfig("CRITGW", 15, check="moments", sizes={"samples": 100_000, "ns": [1, 3]})
    rep = run_experiment(cfg)
    assert rep["passed"]
    assert {row["quantity"] for row in rep["details"]["table"]} >= {"mean_w", "var_y"}
    rpt.validate(rep, "report.schema.json")


def test_identity_report_and_outputs(tmp_path):
    cfg = ExperimentConfig("IDENTITY_31", 16, EnvSpec(Deterministic(1), Constant(1 - 1e-9)),
                           sizes={"replicas": 500}, outputs={"qq": str(tmp_path / "qq.csv"), "raw": str(tmp_path / "raw.jsonl")})
    rep = run_experiment(cfg)
    assert rep["ks"]["statistic"] == 0.0 and rep["passed"]
    assert (tmp_path / "qq.csv").read_text().startswith("p,sample,reference\n")
    assert json.loads((tmp_path / "raw.jsonl").read_text().splitlines()[0]) == {"walk": 0, "branching": 0}


def test_identity_mismatched_blocks_is_misconfigured():
    cfg = ExperimentConfig("IDENTITY_31", 0, simple_spec(), sizes={"n_blocks": 5, "n_blocks_branching": 4})
    with pytest.raises(Misconfigured):
        run_experiment(cfg)


# ---------------------------------------------------------------- configs


def test_parse_config_examples():
    cfg = parse_config({"kind": "SPEED", "seed": 3, "spec": LADDER_SPEC, "sizes": {"n": 10}})
    assert cfg.sizes == {"n": 10, "replicas": 200} and cfg.experiment_id == "SPEED"
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        parse_config({"kind": "SPEEDY", "seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"kind": "SPEED", "seed": -1, "spec": LADDER_SPEC})
    with pytest.raises(ConfigError):
        parse_config({"kind": "SPEED", "seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"kind": "CRITGW", "seed": 1})
    with pytest.raises(ConfigError):
        parse_config({"kind": "SPEED", "seed": 1, "spec": {"xi": {"family": "Nope"}}})
    with pytest.raises(ConfigError):
        ExperimentConfig("SPEED", 1, simple_spec(), sizes={"replicas": 0})


# ---------------------------------------------------------------- determinism


def _report_bytes(cfg, workers):
    return rpt.dumps(rpt.without_timing(run_experiment(cfg, workers)))


@pytest.mark.parametrize("kind,sizes", [
    ("SPEED", {"n": 5000, "replicas": 64}),
    ("REGEN_TAIL", {"cycles": 50_000}),
    ("IDENTITY_31", {"replicas": 400}),
])
def test_reports_are_identical_across_worker_counts(kind, sizes):
    cfg = parse_config({"kind": kind, "seed": 99, "spec": MIXED_SPEC, "sizes": sizes})
    reports = {w: _report_bytes(cfg, w) for w in (1, 4, 16)}
    assert reports[1] == reports[4] == reports[16]


def test_replica_map_preserves_order():
    assert replica_map(lambda i: i * i, 100, 16) == [i * i for i in range(100)]


@pytest.mark.slow
def test_replica_streams_do_not_collide():
    first = np.fromiter((split(2024, "SPEED/walk", i).integers(0, 2**64, dtype=np.uint64) for i in range(1_000_000)),
                        dtype=np.uint64, count=1_000_000)
    assert np.unique(first).size == first.size


def test_streams_depend_on_every_address_part():
    draws = {
        (s, e, i): split(s, e, i).integers(0, 2**63)
        for s in (0, 1) for e in ("a", "b") for i in (0, 1)
    }
    assert len(set(draws.values())) == len(draws)
    assert split(0, "a", 0).integers(0, 2**63) == draws[(0, "a", 0)]
    assert seed_sequence(5, "x", 1, 2).spawn_key[-2:] == (1, 2)


# ---------------------------------------------------------------- CLI


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(LADDER_SPEC))
    return path


def test_cli_speed(spec_file, tmp_path, capsys):
    assert main(["speed", "--spec", str(spec_file)]) == 0
    assert rpt.loads(capsys.readouterr().out)["v"] == pytest.approx(1 / 3)


def test_cli_alpha_root(tmp_path, capsys):
    path = tmp_path / "ln.json"
    path.write_text(json.dumps({"xi": {"family": "Deterministic", "m": 1},
                                "lambda": {"family": "LogitOfLogNormalRho", "m": -0.75, "s2": 1.0}}))
    assert main(["alpha-root", "--spec", str(path)]) == 0
    doc = rpt.loads(capsys.readouterr().out)
    assert doc["alpha"] == pytest.approx(1.5) and doc["regime"]["case_label"] == "A1"


def test_cli_simulate_walk_csv(spec_file, tmp_path):
    out = tmp_path / "walk.csv"
    args = ["simulate-walk", "--spec", str(spec_file), "--n", "500", "--replicas", "5", "--seed", "3", "--out", str(out)]
    assert main(args) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "replica,T_n,truncated,min_site" and len(lines) == 6
    first = out.read_text()
    assert main(args + ["--workers", "4"]) == 0
    assert out.read_text() == first


def test_cli_simulate_bpi_then_tails(spec_file, tmp_path, capsys):
    regen = tmp_path / "regen.jsonl"
    assert main(["simulate-bpi", "--spec", str(spec_file), "--cycles", "5000", "--out", str(regen)]) == 0
    assert main(["tails", "--input", str(regen)]) == 0
    doc = rpt.loads(capsys.readouterr().out)
    assert doc["cycles"] == 5000 and doc["mean_tau1"] >= 1


def test_cli_critgw_csv(tmp_path):
    out = tmp_path / "crit.csv"
    assert main(["critgw", "--check", "moments", "--n", "1,2", "--samples", "50000", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "quantity,exact,estimate,se,pass"


def test_cli_report_validation(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "SPEED", "seed": 1, "spec": LADDER_SPEC, "sizes": {"n": 5000, "replicas": 40}}))
    out = tmp_path / "rep.json"
    assert main(["report", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["report", "--validate", str(out)]) == 0
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps({"kind": "SPEED"}))
    assert main(["report", "--validate", str(broken)]) == 1


def test_cli_exit_codes(spec_file, tmp_path):
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"kind": "NOPE", "seed": 1}))
    assert main(["report", "--config", str(bad_cfg)]) == 2
    assert main(["speed", "--spec", str(tmp_path / "missing.json")]) == 2
    assert main(["speed"]) == 2
    recurrent = tmp_path / "rec.json"
    recurrent.write_text(json.dumps({"xi": {"family": "Deterministic", "m": 1},
                                     "lambda": {"family": "Constant", "lam": 0.4}}))
    assert main(["speed", "--spec", str(recurrent)]) == 3
    mismatch = tmp_path / "mm.json"
    mismatch.write_text(json.dumps({"kind": "IDENTITY_31", "seed": 1, "spec": LADDER_SPEC,
                                    "sizes": {"n_blocks": 5, "n_blocks_branching": 3}}))
    assert main(["identity-check", "--config", str(mismatch)]) == 2


def test_cli_statistical_failure_exit_code(spec_file, tmp_path):
    cfg = tmp_path / "strict.json"
    # a zero-width tolerance cannot be met by a Monte Carlo mean
    cfg.write_text(json.dumps({"kind": "SPEED", "seed": 1, "spec": LADDER_SPEC,
                               "sizes": {"n": 2000, "replicas": 20}, "tolerances": {"se_mult": 0.0}}))
    assert main(["report", "--config", str(cfg)]) == 1


def test_report_schema_rejects_bad_ks():
    rep = run_experiment(ExperimentConfig("IDENTITY_31", 0, EnvSpec(Deterministic(1), Constant(1 - 1e-9)),
                                          sizes={"replicas": 100}))
    rep["ks"]["statistic"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        rpt.validate(rep, "report.schema.json")
