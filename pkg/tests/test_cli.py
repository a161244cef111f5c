import json
import os

import numpy as np
import pytest

from ddpp import cli, data


def run_cli(*argv):
    return cli.main(list(argv))


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]


GEN_ARGS = ["--n", "60", "--m", "8", "--clusters", "4", "--sources", "3",
            "--seed", "7", "--ni", "20"]

RUN_ARGS = ["--strategies", "ddpp,greedi", "--seeds", "2", "--N", "2",
            "--kT", "4", "--tT", "2", "--m", "8", "--ni", "12",
            "--clusters", "4", "--R", "4"]


class TestGen:
    def test_writes_reloadable_files(self, tmp_path):
        out = tmp_path / "gen"
        assert run_cli("gen", "--out", str(out), *GEN_ARGS) == 0
        Z, labels = data.load_features(out / "features.ddpm", fmt="ddpm")
        assert Z.shape == (60, 8) and labels is not None
        with open(out / "partition.json") as fh:
            part = data.SourcePartition.from_json(fh.read()).validate(60)
        assert part.n_sources == 3
        assert (out / "manifest.json").exists()

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("gen", "--out", str(a), *GEN_ARGS)
        run_cli("gen", "--out", str(b), *GEN_ARGS)
        assert (a / "features.ddpm").read_bytes() == (b / "features.ddpm").read_bytes()

    def test_divisibility_error_exit_code(self, tmp_path):
        code = run_cli("gen", "--out", str(tmp_path / "x"), "--n", "50",
                       "--sources", "7", "--m", "4", "--clusters", "2")
        assert code == 2


class TestRun:
    def test_line_count_matches_campaign_grid(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli("run", "--out", str(out), *RUN_ARGS) == 0
        lines = read_jsonl(out / "results.jsonl")
        assert len(lines) == 2 * 2  # strategies x seeds
        assert {ln["strategy"] for ln in lines} == {"ddpp", "greedi"}
        for ln in lines:
            assert {"strategy", "seed", "rde", "diversity", "uplink_elements",
                    "downlink_elements", "k_T", "N", "R"} <= set(ln)
        assert (out / "manifest.json").exists()
        assert (out / "gt_cache.json").exists()

    def test_reruns_are_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("run", "--out", str(a), *RUN_ARGS)
        run_cli("run", "--out", str(b), *RUN_ARGS)
        assert read_jsonl(a / "results.jsonl") == read_jsonl(b / "results.jsonl")

    def test_single_interval_ddpp_equals_greedi(self, tmp_path):
        out = tmp_path / "deg"
        run_cli("run", "--out", str(out), "--strategies", "ddpp,greedi",
                "--seeds", "2", "--N", "2", "--kT", "4", "--tT", "1",
                "--m", "8", "--ni", "12", "--clusters", "4", "--R", "4")
        lines = read_jsonl(out / "results.jsonl")
        by_key = {}
        for ln in lines:
            by_key.setdefault(ln["seed"], {})[ln["strategy"]] = ln
        for seed, pair in by_key.items():
            assert set(pair["ddpp"]["selected_indices"]) == \
                set(pair["greedi"]["selected_indices"])

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("kT=4\ntT=2\nm=8\nni=12\nclusters=4\nseeds=2\n"
                       "N=2\nstrategies=greedi\nR=4\n")
        out = tmp_path / "cfgrun"
        assert run_cli("run", "--out", str(out), "--config", str(cfg),
                       "--seeds", "1") == 0  # flag wins over file
        lines = read_jsonl(out / "results.jsonl")
        assert len(lines) == 1
        assert lines[0]["strategy"] == "greedi"

    def test_unknown_config_key_exit_code(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("warp_speed=9\n")
        assert run_cli("run", "--out", str(tmp_path / "x"),
                       "--config", str(cfg)) == 2

    def test_budget_violation_exit_code(self, tmp_path):
        # uncompressed feedback cannot fit in R*m elements
        code = run_cli("run", "--out", str(tmp_path / "x"),
                       "--strategies", "ddpp", "--seeds", "1", "--N", "2",
                       "--kT", "4", "--tT", "2", "--m", "8", "--ni", "12",
                       "--clusters", "4", "--R", "2", "--compression", "none")
        assert code == 3

    def test_thread_pool_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DDPP_THREADS", "2")
        out = tmp_path / "pooled"
        assert run_cli("run", "--out", str(out), *RUN_ARGS) == 0
        assert len(read_jsonl(out / "results.jsonl")) == 4


class TestReport:
    @pytest.fixture()
    def results_dir(self, tmp_path):
        out = tmp_path / "run"
        run_cli("run", "--out", str(out), "--strategies",
                "ddpp,greedi,random", "--seeds", "3", "--N", "2",
                "--kT", "4", "--tT", "2", "--m", "8", "--ni", "12",
                "--clusters", "4", "--R", "4")
        return out

    def test_summary_and_ttest_tables(self, results_dir, tmp_path):
        rep = tmp_path / "rep"
        assert run_cli("report", "--results", str(results_dir / "results.jsonl"),
                       "--out", str(rep), "--pairs", "ddpp:greedi,ddpp:random") == 0
        summary = (rep / "summary.csv").read_text().strip().splitlines()
        assert summary[0].startswith("strategy,N,R,m,mean_rde")
        assert len(summary) == 1 + 3  # one row per strategy cell
        ttest = (rep / "ttest.csv").read_text().strip().splitlines()
        assert len(ttest) == 1 + 2

    def test_pca_scatter(self, results_dir, tmp_path):
        rep = tmp_path / "rep2"
        assert run_cli("report", "--results", str(results_dir / "results.jsonl"),
                       "--out", str(rep), "--pca-seed", "0",
                       "--pca-strategy", "ddpp") == 0
        rows = (rep / "pca_seed0.csv").read_text().strip().splitlines()
        assert rows[0] == "x,y,label,selected"
        assert len(rows) == 1 + 24  # N * ni samples
        assert sum(int(r.rsplit(",", 1)[1]) for r in rows[1:]) == 4

    def test_empty_results_fail(self, tmp_path):
        empty = tmp_path / "none.jsonl"
        empty.write_text("")
        assert run_cli("report", "--results", str(empty),
                       "--out", str(tmp_path / "rep")) == 2


class TestOracleAndTtest:
    def test_oracle_on_small_csv(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text("3,0\n0,2\n1,1\n")
        assert run_cli("oracle", "--data", str(path), "--k", "2") == 0
        out = json.loads(capsys.readouterr().out)
        assert out["indices"] == [0, 1]

    def test_ttest_subcommand(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli("run", "--out", str(out), "--strategies", "ddpp,random",
                "--seeds", "3", "--N", "2", "--kT", "4", "--tT", "2",
                "--m", "8", "--ni", "12", "--clusters", "4", "--R", "4")
        assert run_cli("ttest", "--results", str(out / "results.jsonl"),
                       "--a", "ddpp", "--b", "random") == 0
        payload = json.loads(capsys.readouterr().out.splitlines()[-1])
        assert payload["n_a"] == 3 and payload["n_b"] == 3
        assert 0.0 <= payload["p"] <= 1.0
