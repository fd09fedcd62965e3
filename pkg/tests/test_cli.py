"""CLI surface: exit codes, written artifacts, and byte-level determinism."""

import json

import numpy as np
import pytest
from conftest import TRADEOFF_SCHEMA, build_tradeoff_dataset, write_synthetic_csv

from fairalloc.audit import export_csv
from fairalloc.cli import main


def run_cli(*argv) -> int:
    return main(list(argv))


@pytest.fixture
def population_csv(tmp_path):
    path = tmp_path / "pop.csv"
    path.write_text(
        "id,u_1,u_2,g\n"
        "a,1.0,0.0,0\n"
        "b,0.0,1.0,1\n"
    )
    return str(path)


@pytest.fixture
def solve_fixture_csv(tmp_path):
    path = tmp_path / "pop2.csv"
    path.write_text(
        "id,u_1,u_2,g\n"
        "a,0.9,0.8,0\n"
        "b,0.5,0.1,1\n"
    )
    return str(path)


class TestSolve:
    def test_unique_optimum(self, population_csv, tmp_path):
        out = tmp_path / "out"
        assert run_cli(
            "solve", "--population", population_csv, "--capacities", "1,1",
            "--output-dir", str(out),
        ) == 0
        alloc_lines = (out / "allocation.csv").read_text().splitlines()
        assert alloc_lines == ["id,service", "a,1", "b,2"]
        payload = json.loads((out / "fairness_report.json").read_text())
        assert payload["total_utility"] == 2.0
        assert "g" in payload["fairness"]

    def test_brute_force_example(self, solve_fixture_csv, tmp_path):
        out = tmp_path / "out"
        assert run_cli(
            "solve", "--population", solve_fixture_csv, "--capacities", "1,1",
            "--output-dir", str(out),
        ) == 0
        alloc_lines = (out / "allocation.csv").read_text().splitlines()
        assert alloc_lines == ["id,service", "a,2", "b,1"]

    def test_infeasible_exit_code(self, population_csv, tmp_path):
        code = run_cli(
            "solve", "--population", population_csv, "--capacities", "1,0",
            "--output-dir", str(tmp_path / "out"),
        )
        assert code == 3

    def test_random_policy_repeatable(self, population_csv, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli(
                "solve", "--population", population_csv, "--capacities", "2,2",
                "--policy", "random", "--seed", "5", "--output-dir", str(out),
            ) == 0
        assert (out_a / "allocation.csv").read_bytes() == (out_b / "allocation.csv").read_bytes()


class TestSimulate:
    def test_params_file_and_determinism(self, tmp_path):
        params = {
            "kind": "gaussian",
            "means": [[0.2, 0.3, 0.4], [0.4, 0.5, 0.63]],
            "variances": [[1e-4, 4e-4, 9e-4], [1e-4, 4e-4, 9e-4]],
            "group_sizes": [60, 60],
            "capacities": [40, 40, 40],
            "policy": {"kind": "random"},
            "replications": 5,
            "base_seed": 7,
        }
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps(params))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli(
                "simulate", "--params", str(params_path), "--reps", "6",
                "--seed", "7", "--output-dir", str(out),
            ) == 0
        for name in ("result.json", "metrics.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
        payload = json.loads((out_a / "result.json").read_text())
        assert payload["replications"] == 6
        assert set(payload["metrics"]) == {
            "delta_improvement", "delta_regret", "delta_gain", "delta_shortfall"
        }
        for metric in payload["metrics"].values():
            assert metric is None or "ci95_half_width" in metric

    def test_single_replication_rejected(self, tmp_path):
        params_path = tmp_path / "params.json"
        params_path.write_text(json.dumps({
            "kind": "gaussian",
            "means": [[0.5]], "variances": [[1e-4]],
        }))
        # malformed params (one group row) also exits 2
        assert run_cli("simulate", "--params", str(params_path), "--reps", "1",
                       "--output-dir", str(tmp_path / "o")) == 2

    def test_reps_guard(self, tmp_path):
        out = tmp_path / "o"
        assert run_cli("simulate", "--params", "experiment1", "--reps", "1",
                       "--output-dir", str(out)) == 2

    def test_missing_params_file(self, tmp_path):
        assert run_cli("simulate", "--params", str(tmp_path / "nope.json"),
                       "--output-dir", str(tmp_path / "o")) == 2


class TestAudit:
    def test_full_pipeline(self, tmp_path):
        data = tmp_path / "data.csv"
        write_synthetic_csv(data, n=600, seed=4)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli(
                "audit", "--data", str(data), "--config", "homeless",
                "--output-dir", str(out),
            ) == 0
        report = json.loads((out_a / "report.json").read_text())
        assert report["households"] == 600
        assert report["bandwidth"] == 0.2
        assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
        assert (out_a / "shares.csv").read_bytes() == (out_b / "shares.csv").read_bytes()
        kde_file = (out_a / "kde_children_0.csv").read_text().splitlines()
        assert kde_file[0] == "grid,density,bandwidth"
        assert kde_file[1].endswith(",0.2")

    def test_tradeoff_flag_reported(self, tmp_path, capsys):
        ds = build_tradeoff_dataset()
        # four households so Welch has variance: duplicate with tiny offsets
        utilities = np.array([
            [0.5, 0.55, 0.58], [0.5, 0.551, 0.582],
            [0.5, 0.537, 0.551], [0.5, 0.538, 0.553],
        ])
        fat = type(ds)(
            ids=("a", "b", "c", "d"),
            probabilities=1.0 - utilities,
            observed=np.array([2, 2, 2, 2]),
            groups={"children": np.array([0, 0, 1, 1], dtype=np.int8)},
            service_names=("TH", "RRH", "ES"),
        )
        data = tmp_path / "trade.csv"
        from fairalloc.audit import AuditSchema

        schema = AuditSchema.from_dict(TRADEOFF_SCHEMA)
        export_csv(fat, str(data), schema)
        config = tmp_path / "schema.json"
        config.write_text(json.dumps(TRADEOFF_SCHEMA))
        assert run_cli(
            "audit", "--data", str(data), "--config", str(config),
            "--output-dir", str(tmp_path / "out"),
        ) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert "improvement-regret-trade-off" in report["pairs"]["children"]["observed"]["flags"]

    def test_schema_errors_exit_2(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("id,wrong\n1,2\n")
        config = tmp_path / "schema.json"
        config.write_text(json.dumps(TRADEOFF_SCHEMA))
        assert run_cli(
            "audit", "--data", str(data), "--config", str(config),
            "--output-dir", str(tmp_path / "out"),
        ) == 2

    def test_empty_group_exit_2(self, tmp_path):
        ds = build_tradeoff_dataset()
        all_ones = type(ds)(
            ids=ds.ids,
            probabilities=ds.probabilities,
            observed=ds.observed,
            groups={"children": np.array([1, 1], dtype=np.int8)},
            service_names=ds.service_names,
        )
        data = tmp_path / "empty.csv"
        from fairalloc.audit import AuditSchema

        schema = AuditSchema.from_dict(TRADEOFF_SCHEMA)
        export_csv(all_ones, str(data), schema)
        config = tmp_path / "schema.json"
        config.write_text(json.dumps(TRADEOFF_SCHEMA))
        assert run_cli(
            "audit", "--data", str(data), "--config", str(config),
            "--output-dir", str(tmp_path / "out"),
        ) == 2


class TestCheck:
    def test_check_passes(self, capsys):
        assert run_cli("check", "--seed", "7") == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 5
        assert "[FAIL]" not in out


class TestThreadCap:
    def test_env_var_caps_parallelism(self, monkeypatch):
        from fairalloc.cli import _thread_count

        monkeypatch.delenv("FAIRALLOC_THREADS", raising=False)
        assert _thread_count(4) == 4
        monkeypatch.setenv("FAIRALLOC_THREADS", "2")
        assert _thread_count(4) == 2
        assert _thread_count(1) == 1
        monkeypatch.setenv("FAIRALLOC_THREADS", "junk")
        assert _thread_count(3) == 3
