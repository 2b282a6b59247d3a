import csv
import json
import math
import subprocess
import sys

import pytest

from bnpma import io
from bnpma.cli import OUTPUTS, main
from bnpma.config import ConfigError, load_config, parse_config_text, build_config, parse_selector

HEADER = "study_id,cohort_id,marker,median,ci_lower,ci_upper,n,conf_level,arm,age\n"
GOOD = [
    "s1,a,positive,4,2,9,50,,chemo,61",
    "s1,b,negative,3,1.5,6,40,0.95,chemo,61",
    "s2,c,+,8,5,15,60,,tki,55",
    "s2,d,-,5.5,3,10,30,,tki,55",
    "s3,e,none,2.5,1,Inf,20,,chemo,70",
]


def write_csv(path, rows):
    path.write_text(HEADER + "\n".join(rows) + "\n")
    return path


def test_ingest_good_rows(tmp_path):
    cohorts, report = io.ingest(write_csv(tmp_path / "d.csv", GOOD))
    assert report.accepted == 5 and not report.rejected
    assert [c.marker for c in cohorts] == ["positive", "negative", "positive", "negative", "none"]
    assert math.isinf(cohorts[4].upper) and report.imputations[0]["cohort_id"] == "e"
    # arm is categorical (baseline 'chemo' dropped); age is numeric
    assert report.baselines == {"arm": "chemo"}
    assert report.encoded_columns == ["arm=tki", "age"]
    assert list(cohorts[2].covariates) == [1.0, 55.0]
    assert cohorts[0].conf_level == 0.95


@pytest.mark.parametrize("row,reason", [
    ("s9,x,positive,3,4,9,50,,chemo,1", "interval ordering"),
    ("s9,x,positive,4,2,9,,,chemo,1", "missing n"),
    ("s9,x,maybe,4,2,9,50,,chemo,1", "bad marker"),
    ("s9,x,positive,4,2,9,2.5,,chemo,1", "integer"),
    ("s9,a,positive,4,2,9,50,,chemo,1", "duplicate"),
    ("s9,x,positive,4,2,9,50,,,1", "missing covariate"),
])
def test_ingest_rejections(tmp_path, row, reason):
    cohorts, report = io.ingest(write_csv(tmp_path / "d.csv", GOOD + [row]))
    assert report.accepted == 5
    (rownum, cid, why), = report.rejected
    assert rownum == 7 and reason in why


def test_ingest_missing_columns(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("study_id,cohort_id\ns,a\n")
    with pytest.raises(io.IngestError):
        io.ingest(p)


def test_write_roundtrip_idempotent(tmp_path):
    cohorts, report = io.ingest(write_csv(tmp_path / "d.csv", GOOD))
    io.write_cohorts(tmp_path / "r1.csv", cohorts, report.covariate_columns)
    again, _ = io.ingest(tmp_path / "r1.csv")
    io.write_cohorts(tmp_path / "r2.csv", again, report.covariate_columns)
    assert (tmp_path / "r1.csv").read_bytes() == (tmp_path / "r2.csv").read_bytes()
    for a, b in zip(cohorts, again):
        assert (a.lower, a.median, a.upper, a.n) == (b.lower, b.median, b.upper, b.n)


def test_fmt_roundtrips_floats():
    for x in (0.1, 1 / 3, 6.2557e-12, math.inf):
        assert float(io.fmt(x).replace("Inf", "inf")) == x


def test_config_parsing():
    cfg = build_config(parse_config_text(
        "seed = 4  # comment\n[chain]\nn_iter = 100\n[model]\nH = auto\nalpha = 2\n"
        "[output]\npredictive = arm=tki; arm=chemo&age=61\n"))
    assert cfg.seed == 4 and cfg.n_iter == 100 and cfg.burn_in == 50
    assert cfg.model.H is None and cfg.model.alpha == 2.0
    assert cfg.predictive == ["arm=tki", "arm=chemo&age=61"]
    assert parse_selector("arm=chemo&age=61") == {"arm": "chemo", "age": "61"}
    defaults = load_config(None)
    assert (defaults.n_iter, defaults.burn_in, defaults.thin) == (50000, 49000, 1)
    for bad in ("[chain]\nlength = 3\n", "[nope]\na = 1\n", "[chain]\nthin = x\n",
                "[model]\nalpha = -1\n"):
        with pytest.raises(ConfigError):
            build_config(parse_config_text(bad))


@pytest.fixture
def run_dir(tmp_path):
    data = write_csv(tmp_path / "d.csv", GOOD)
    cfg = tmp_path / "c.ini"
    cfg.write_text("seed = 3\n[chain]\nn_iter = 60\nburn_in = 20\nthin = 2\n[model]\ndepth = 6\n"
                   "[output]\npredictive = arm=tki\n")
    return tmp_path, data, cfg


def test_analyze_outputs(run_dir, capsys):
    tmp, data, cfg = run_dir
    assert main(["analyze", "--data", str(data), "--config", str(cfg), "--out", str(tmp / "o")]) == 0
    for name in OUTPUTS + ("predictive_all.csv", "predictive_marker_positive.csv",
                           "predictive_marker_negative.csv", "predictive_arm_tki.csv"):
        assert (tmp / "o" / name).exists(), name
    diag = json.loads((tmp / "o" / "diagnostics.json").read_text())
    assert diag["kept"] == 20 and diag["seed"] == 3
    assert 0 <= diag["p_marker_positive_larger"] <= 1
    med = list(csv.DictReader(open(tmp / "o" / "chain_medians.csv")))
    assert len(med) == 20 and set(med[0]) == {"iteration", "a", "b", "c", "d", "e"}
    forest = list(csv.DictReader(open(tmp / "o" / "forest.csv")))
    assert {r["source"] for r in forest} == {"bnpma", "reported"}
    effects = {r["covariate"] for r in csv.DictReader(open(tmp / "o" / "effects.csv"))}
    assert {"arm=chemo", "arm=tki"} <= effects


def test_analyze_deterministic_across_workers(run_dir):
    tmp, data, cfg = run_dir
    main(["analyze", "--data", str(data), "--config", str(cfg), "--out", str(tmp / "a")])
    main(["analyze", "--data", str(data), "--config", str(cfg), "--out", str(tmp / "b"),
          "--workers", "3"])
    for name in ("chain_medians.csv", "clusters.csv", "forest.csv", "partition.csv"):
        assert (tmp / "a" / name).read_bytes() == (tmp / "b" / name).read_bytes()


def test_missing_seed_is_usage_error(run_dir, capsys):
    tmp, data, _ = run_dir
    cfg = tmp / "noseed.ini"
    cfg.write_text("[chain]\nn_iter = 10\n")
    code = main(["analyze", "--data", str(data), "--config", str(cfg), "--out", str(tmp / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "UsageError"


def test_bad_data_is_json_error(tmp_path, capsys):
    code = main(["analyze", "--data", str(tmp_path / "missing.csv"), "--seed", "1",
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "IngestError"


def test_simulate_and_score(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text("seed = 1\n[chain]\nn_iter = 40\nburn_in = 20\n[model]\ndepth = 6\n"
                   "[sim]\nS = 4\nn = 30\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim"), "--seed", "2"]) == 0
    data = tmp_path / "sim" / "sim_data.csv"
    assert main(["analyze", "--data", str(data), "--config", str(cfg),
                 "--out", str(tmp_path / "fit")]) == 0
    assert main(["score", "--data", str(data), "--truth", str(tmp_path / "sim" / "sim_truth.csv"),
                 "--chain", str(tmp_path / "fit"), "--out", str(tmp_path / "sc")]) == 0
    score = json.loads((tmp_path / "sc" / "score.json").read_text())
    assert score["n_cohorts"] == 8 and score["n_pairs"] == 4


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bnpma.cli", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "analyze" in proc.stdout


def test_full_size_dataset(tmp_path):
    # 25 studies and 53 cohorts: 22 studies with a +/- pair, 3 with a third cohort
    rows = []
    rng = __import__("numpy").random.default_rng(0)
    for s in range(25):
        markers = ["positive", "negative"] + (["none"] if s < 3 else [])
        for k, m in enumerate(markers):
            med = float(rng.uniform(2, 12))
            rows.append(f"S{s},S{s}c{k},{m},{med},{med / 2},{med * 1.8},{40 + s},,"
                        f"{'chemo' if s % 2 else 'tki'},{50 + s}")
    rows.append("S99,bad,positive,3,4,5,30,,chemo,1")
    cohorts, report = io.ingest(write_csv(tmp_path / "full.csv", rows))
    assert report.accepted == 53 and len({c.study_id for c in cohorts}) == 25
    assert report.accepted + len(report.rejected) == report.input_rows
