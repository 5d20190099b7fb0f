import csv
import math

import numpy as np
import pytest

from mfpm.cli import main
from mfpm.harness import (COLUMNS, ConfigError, ExperimentConfig, SummaryError, run_experiment,
                          summarize, summary_path, timing_path)
from mfpm.network import ParamConfig, load_network, random_edge_list, write_edge_list


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "toy.txt"
    write_edge_list(path, random_edge_list(40, 90, np.random.default_rng(1)))
    return path


def write_config(tmp_path, dataset, name="exp.cfg", **extra):
    body = {"dataset": dataset.name, "output": "out/res.csv", "q": 2, "budgets": "0, 1, 3",
            "policies": "SAG, AMP, AR, AMD, MGRIS", "repetitions": 3, "rr_cap": 3000,
            "seed": 11, "mc_sims": 20}
    body.update(extra)
    path = tmp_path / name
    path.write_text("".join(f"{k} = {v}\n" for k, v in body.items()))
    return path


def read(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_config_parsing(tmp_path, dataset):
    cfg = ExperimentConfig.from_file(write_config(tmp_path, dataset, deterministic_knapsack="yes",
                                                  directed="false", rng_seed=4))
    assert cfg.budgets == (0.0, 1.0, 3.0)
    assert cfg.policies == ("SAG", "AMP", "AR", "AMD", "MGRIS")
    assert cfg.network == ParamConfig(q=2, directed=False, rng_seed=4)
    assert cfg.knapsack == "deterministic"
    assert cfg.dataset == str(dataset)


@pytest.mark.parametrize("extra", [{"policies": "SAG, FOO"}, {"repetitions": 0},
                                   {"budgets": "1, -2"}, {"colour": "blue"},
                                   {"knapsack": "maybe"}])
def test_config_rejects_bad_values(tmp_path, dataset, extra):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(write_config(tmp_path, dataset, **extra))


def test_config_requires_dataset(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("output = x.csv\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(p)


def test_run_experiment_rows(tmp_path, dataset):
    cfg = ExperimentConfig.from_file(write_config(tmp_path, dataset))
    with pytest.warns(Warning):
        out = run_experiment(cfg)
    rows = read(out)
    assert tuple(rows[0].keys()) == COLUMNS
    assert len(rows) == 5 * 3 * 3
    net = load_network(dataset, cfg.network)
    for r in rows:
        b = float(r["budget"])
        if b == 0:
            assert r["seeds"] == "" and float(r["realized_profit"]) == 0.0
            assert float(r["total_cost"]) == 0.0
        else:
            assert float(r["total_cost"]) < b + net.cost.max()
            labels = r["seeds"].split(";")
            assert set(labels) <= set(net.labels)
    assert [r["policy"] for r in rows[::9]] == ["SAG", "AMP", "AR", "AMD", "MGRIS"]
    assert len(read(timing_path(out))) == len(rows)
    summary = read(summary_path(out))
    assert len(summary) == 15
    sag1 = [float(r["realized_profit"]) for r in rows if r["policy"] == "SAG" and r["budget"] == "1.0"]
    row = next(s for s in summary if s["policy"] == "SAG" and s["budget"] == "1.0")
    assert float(row["mean_profit"]) == pytest.approx(sum(sag1) / 3)


def test_rerun_is_byte_identical(tmp_path, dataset):
    cfg = ExperimentConfig.from_file(write_config(tmp_path, dataset, policies="SAG, AG, MGMC",
                                                  budgets="2"))
    first = run_experiment(cfg).read_bytes()
    second = run_experiment(cfg).read_bytes()
    assert first == second


def test_worker_pool_matches_serial(tmp_path, dataset):
    cfg = ExperimentConfig.from_file(write_config(tmp_path, dataset, policies="AR, AMD",
                                                  budgets="1, 2"))
    serial = run_experiment(cfg).read_bytes()
    pooled = run_experiment(ExperimentConfig.from_file(
        write_config(tmp_path, dataset, policies="AR, AMD", budgets="1, 2", workers=2))).read_bytes()
    assert serial == pooled


def test_adding_a_policy_keeps_other_rows(tmp_path, dataset):
    a = run_experiment(ExperimentConfig.from_file(write_config(tmp_path, dataset, policies="AR")))
    rows_a = read(a)
    b = run_experiment(ExperimentConfig.from_file(write_config(tmp_path, dataset,
                                                               policies="AMD, AR")))
    rows_b = [r for r in read(b) if r["policy"] == "AR"]
    assert rows_a == rows_b


def test_unwritable_output(tmp_path, dataset):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = ExperimentConfig.from_file(write_config(tmp_path, dataset, policies="AR",
                                                  output="file/sub/res.csv"))
    with pytest.raises(OSError):
        run_experiment(cfg)


def make_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for policy, budget, rep, cost, prof in rows:
            w.writerow(["d", policy, 3, budget, rep, "", cost, prof, 0.0, 0])


def test_summarize_single_and_many(tmp_path, capsys):
    p = tmp_path / "one.csv"
    make_csv(p, [("SAG", 5.0, 0, 4.5, 12.25)])
    table = summarize(p)
    assert table[0]["mean_profit"] == 12.25 and table[0]["mean_cost"] == 4.5
    assert math.isnan(table[0]["mean_wallclock_ms"])
    assert "SAG" in capsys.readouterr().out
    profits = np.random.default_rng(0).uniform(0, 100, 30)
    make_csv(p, [("AR", 10.0, i, 1.0, float(x)) for i, x in enumerate(profits)])
    table = summarize(p)
    assert table[0]["runs"] == 30
    assert table[0]["mean_profit"] == pytest.approx(sum(profits.tolist()) / 30, rel=1e-12)


@pytest.mark.parametrize("text", ["", "policy,budget\nSAG,1\n", ",".join(COLUMNS) + "\n",
                                  ",".join(COLUMNS) + "\nd,SAG,3,abc,0,,1,1,1,0\n",
                                  ",".join(COLUMNS) + "\nd,SAG,3,1.0\n"])
def test_summarize_rejects_malformed(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(SummaryError):
        summarize(p)
    assert main(["summarize", str(p)]) == 2


def test_cli_run_and_summarize(tmp_path, dataset, capsys):
    cfg = write_config(tmp_path, dataset, policies="AMD, AR", budgets="0, 2")
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out" / "res.csv"
    first = out.read_bytes()
    assert main(["run", "--config", str(cfg)]) == 0
    assert out.read_bytes() == first
    assert main(["summarize", str(out)]) == 0
    text = capsys.readouterr().out
    assert "AMD" in text and "AR" in text
    assert main(["run", "--config", str(cfg), "--deterministic-knapsack",
                 "--output", str(tmp_path / "det.csv")]) == 0
    for r in read(tmp_path / "det.csv"):
        assert float(r["total_cost"]) <= float(r["budget"])


def test_cli_oracle(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("a b\n")
    assert main(["oracle", "--graph", str(g), "--seeds", "a"]) == 0
    # p = 1/indeg = 1, so seeding a reaches b for sure: profit b(a) + b(b)
    out = capsys.readouterr().out
    net = load_network(g, ParamConfig(q=1))
    assert float(out.split("=")[1]) == pytest.approx(net.profit.sum())
    assert main(["oracle", "--graph", str(g), "--budget", "100"]) == 0
    # {a} already reaches b, so it ties with {a,b}; ties go to the smaller bitmask
    out = capsys.readouterr().out
    assert "{a}" in out and float(out.split()[-1]) == pytest.approx(net.profit.sum())
    assert main(["oracle", "--graph", str(g), "--seeds", "zzz"]) == 2


def test_cli_synth(tmp_path):
    out = tmp_path / "s.txt"
    assert main(["synth", "--nodes", "30", "--edges", "60", "--seed", "2", "--out", str(out)]) == 0
    assert len([l for l in out.read_text().splitlines() if not l.startswith("#")]) == 60
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
