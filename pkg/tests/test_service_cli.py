import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from shortint.cli import main
from shortint.config import (
    ExperimentConfig,
    apply_env_overrides,
    build_config,
    parse_flat_config,
)
from shortint.errors import UsageError, VerificationError
from shortint.experiments import RunContext, emit_plot_data, run
from shortint.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestConfigFormat:
    def test_flat_parse(self):
        raw = parse_flat_config(
            """
            # comment
            experiment = variance
            X = 100000
            h_grid = 1, 2, 4
            envelope.4.1 = 50
            t0_mode = fixed:3.0
            """
        )
        assert raw["experiment"] == "variance"
        assert raw["h_grid"] == ["1", "2", "4"]
        assert raw["envelopes"] == {"4.1": 50.0}
        cfg = build_config(raw)
        assert cfg.h_grid == [1, 2, 4]
        assert cfg.t0_fixed() == 3.0
        assert cfg.envelope("4.1", 100.0) == 50.0
        assert cfg.envelope("9.9", 123.0) == 123.0

    def test_unknown_key_rejected(self):
        with pytest.raises(UsageError, match="bogus_key"):
            build_config({"experiment": "sieve", "bogus_key": "1"})

    def test_duplicate_key_rejected(self):
        with pytest.raises(UsageError):
            parse_flat_config("X = 1\nX = 2\n")

    def test_malformed_line(self):
        with pytest.raises(UsageError):
            parse_flat_config("just words\n")

    def test_bad_t0_mode(self):
        with pytest.raises(UsageError):
            build_config({"experiment": "scan", "t0_mode": "sometimes"})

    def test_scientific_notation_ints(self):
        cfg = build_config({"experiment": "variance", "X": "1e6", "h_grid": ["2"]})
        assert cfg.X == 10**6

    def test_env_overrides(self):
        raw = {"experiment": "variance", "X": "100"}
        merged = apply_env_overrides(raw, environ={"SHORTINT_X": "2000", "SHORTINT_THREADS": "4"})
        cfg = build_config(merged)
        assert cfg.X == 2000 and cfg.threads == 4

    def test_hash_is_stable(self):
        a = build_config({"experiment": "sieve", "X": 1000})
        b = build_config({"X": 1000, "experiment": "sieve"})
        assert a.config_hash() == b.config_hash()


class TestServiceEndpoints:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200 and r.json()["status"] == "ok"

    def test_specs(self, client):
        r = client.get("/specs")
        body = r.json()
        assert "dk:k" in body["forms"]
        names = [s["name"] for s in body["examples"]]
        assert "dk:2" in names

    def test_experiments_listing(self, client):
        r = client.get("/experiments")
        assert {e["name"] for e in r.json()} >= {"sieve", "ramare", "threshold"}

    def test_rho_sigma_endpoint(self, client):
        r = client.post("/compute/rho-sigma", json={"k": 2, "alpha": 1.0})
        assert abs(r.json()["rho"] - 0.24225) < 1e-4
        assert client.post("/compute/rho-sigma", json={"k": 0, "alpha": 1.0}).status_code == 422

    def test_mertens_endpoint(self, client):
        r = client.post("/compute/mertens-product", json={"spec_name": "dk:1", "x": 1000})
        assert r.json()["value"] == 1.0
        bad = client.post("/compute/mertens-product", json={"spec_name": "wat:1", "x": 10})
        assert bad.status_code == 400 and bad.json()["kind"] == "usage"

    def test_t0_endpoint(self, client):
        r = client.post(
            "/compute/t0",
            json={"spec_name": "dk_twist:2:3.0", "X": 10**4, "window": [-5.0, 5.0]},
        )
        body = r.json()
        assert abs(body["t0"] - 3.0) < 1e-3

    def test_run_endpoint_usage_error(self, client, tmp_path):
        cfg = {"experiment": "scan", "X": 1000, "h_grid": [], "out_dir": str(tmp_path)}
        r = client.post("/experiments/run", json={"config": cfg})
        assert r.status_code == 400
        assert r.json()["kind"] == "usage"

    def test_run_endpoint_ramare(self, client, tmp_path):
        cfg = {
            "experiment": "ramare",
            "X": 1000,
            "P": 10,
            "Q": 50,
            "H": 3,
            "t_values": [0.0, 1.0],
            "out_dir": str(tmp_path),
        }
        r = client.post("/experiments/run", json={"config": cfg, "strict": False})
        body = r.json()
        assert r.status_code == 200
        assert body["exit_code"] == 0
        assert all(c["status"] == "pass" for c in body["checks"])
        assert (tmp_path / "results.json").exists()
        assert (tmp_path / "manifest.json").exists()


class TestCLI:
    def test_usage_bad_set(self, tmp_path):
        assert main(["variance", "--set", "nonsense", "--out", str(tmp_path)]) == 2

    def test_usage_unknown_key(self, tmp_path):
        assert main(["variance", "--set", "bogus=1", "--out", str(tmp_path)]) == 2

    def test_usage_missing_h_grid(self, tmp_path):
        assert main(["scan", "--set", "X=1000", "--out", str(tmp_path)]) == 2

    def test_config_experiment_mismatch(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("experiment = sieve\nX = 1000\n")
        assert main(["variance", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_run_ok(self, tmp_path, capsys):
        code = main(
            [
                "ramare",
                "--out",
                str(tmp_path),
                "--set",
                "X=1000",
                "--set",
                "P=10",
                "--set",
                "Q=50",
                "--set",
                "H=3",
                "--set",
                "t_values=0,1",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "identity-residual" in out and "ok" in out

    def test_verification_exit_code(self, tmp_path, monkeypatch):
        import shortint.experiments as exps

        def boom(config, ctx):
            raise VerificationError("forced identity failure")

        monkeypatch.setitem(exps._RUNNERS, "sieve", boom)
        code = main(["sieve", "--out", str(tmp_path), "--set", "X=1000"])
        assert code == 3

    def test_strict_flags_exceeded_envelope(self, tmp_path):
        args = [
            "asymptotics",
            "--out",
            str(tmp_path),
            "--set",
            "X=10000",
            "--set",
            "envelope.2.1=0.0001",
        ]
        assert main(args) == 0
        assert main(args + ["--strict"]) == 3

    def test_specs_command(self, capsys):
        assert main(["specs"]) == 0
        assert "dk:k" in capsys.readouterr().out


class TestDeterminism:
    def _run(self, tmp_path, name, threads):
        cfg = build_config(
            {
                "experiment": "variance",
                "X": 10**5,
                "h_grid": [1, 2, 4],
                "threads": threads,
                "out_dir": str(tmp_path / name),
            }
        )
        res = run(cfg)
        assert res.exit_code == 0
        return tmp_path / name

    def test_rerun_and_thread_count_bit_identical(self, tmp_path):
        d1 = self._run(tmp_path, "a", 1)
        d2 = self._run(tmp_path, "b", 1)
        d3 = self._run(tmp_path, "c", 4)
        for name in ("results.json", "variance.csv"):
            b1 = (d1 / name).read_bytes()
            assert b1 == (d2 / name).read_bytes(), f"rerun differs: {name}"
            assert b1 == (d3 / name).read_bytes(), f"thread count changed {name}"
        m1 = json.loads((d1 / "manifest.json").read_text())
        m3 = json.loads((d3 / "manifest.json").read_text())
        for m in (m1, m3):
            for key in ("started_at", "finished_at", "cache_hits", "config", "config_hash"):
                m.pop(key)
        assert m1 == m3


class TestPlotData:
    def test_header_only_when_empty(self, tmp_path):
        cfg = build_config({"experiment": "variance", "h_grid": [1], "out_dir": str(tmp_path)})
        ctx = RunContext(config=cfg, out_dir=Path(tmp_path))
        emit_plot_data({"variance": {"rows": []}, "threshold": {"rows": []}}, ctx)
        assert (tmp_path / "variance.csv").read_text() == "X,h,l2,h_times_l2\n"
        assert (
            tmp_path / "threshold.csv"
        ).read_text() == "exponent,h,exceptional_fraction,vanish_fraction\n"

    def test_schema_round_trip(self, tmp_path):
        cfg = build_config(
            {"experiment": "variance", "X": 10**4, "h_grid": [2, 4], "out_dir": str(tmp_path)}
        )
        res = run(cfg)
        lines = (tmp_path / "variance.csv").read_text().splitlines()
        assert lines[0] == "X,h,l2,h_times_l2"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert int(first[0]) == 10**4 and int(first[1]) == 2
        assert abs(float(first[3]) - 2 * float(first[2])) < 1e-12
