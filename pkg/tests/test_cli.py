"""Tests for the command-line interface: ingestion, subcommands, exit codes."""

import json

import numpy as np
import pytest

from corrwatch.cli import EXIT_ALARM, EXIT_ERROR, EXIT_OK, ingest, main
from corrwatch.simulation import block_equicorrelation, identity_covariance, mvn_batches


def write_rows(path, rows, header=None):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


class TestIngest:
    def test_groups_and_warns_on_partial_batch(self, tmp_path):
        path = tmp_path / "d.csv"
        rng = np.random.default_rng(70)
        write_rows(path, rng.standard_normal((25, 4)))
        with pytest.warns(UserWarning, match="dropped 5 trailing rows"):
            batches = ingest(str(path), "csv", n=10)
        assert batches.shape == (2, 10, 4)

    def test_csv_header_autodetected(self, tmp_path):
        path = tmp_path / "d.csv"
        rng = np.random.default_rng(71)
        write_rows(path, rng.standard_normal((4, 3)), header="a,b,c")
        batches = ingest(str(path), "csv", n=2)
        assert batches.shape == (2, 2, 3)

    def test_malformed_csv_row_names_line(self, tmp_path):
        path = tmp_path / "d.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("1.0,2.0\n3.0,oops\n")
        with pytest.raises(ValueError, match=":2:"):
            ingest(str(path), "csv", n=2)

    def test_ndjson_wrong_length_names_line(self, tmp_path):
        path = tmp_path / "d.ndjson"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write('{"x": [1.0, 2.0]}\n{"x": [1.0]}\n')
        with pytest.raises(ValueError, match=":2:"):
            ingest(str(path), "ndjson", n=2)

    def test_ndjson_happy_path(self, tmp_path):
        path = tmp_path / "d.ndjson"
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(6):
                fh.write(json.dumps({"x": [float(i), float(i) + 0.5, 1.0 - i]}) + "\n")
        batches = ingest(str(path), "ndjson", n=3)
        assert batches.shape == (2, 3, 3)

    def test_dimension_mismatch_against_explicit_p(self, tmp_path):
        path = tmp_path / "d.csv"
        write_rows(path, np.ones((4, 3)))
        with pytest.raises(ValueError, match="expected 5"):
            ingest(str(path), "csv", n=2, p=5)


class TestDetectCommand:
    def _write_stream(self, tmp_path, pre_batches, post_batches, seed=0):
        rng = np.random.default_rng(seed)
        pre = mvn_batches(identity_covariance(20), 10, pre_batches, rng)
        post = mvn_batches(block_equicorrelation(20, 5, 0.75), 10, post_batches, rng)
        rows = np.vstack([pre.reshape(-1, 20), post.reshape(-1, 20)])
        path = tmp_path / "stream.csv"
        write_rows(path, rows)
        return path

    def test_quiet_stream_exits_zero(self, tmp_path, capsys):
        path = self._write_stream(tmp_path, 30, 0, seed=72)
        code = main(["detect", str(path), "--n", "10", "--beta", "5000"])
        events = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert code == EXIT_OK
        assert events[0]["schema"].startswith("corrwatch.detect/")
        assert len(events) == 31
        assert not any(e.get("alarm") for e in events[1:])

    def test_correlated_tail_raises_alarm_exit_two(self, tmp_path, capsys):
        path = self._write_stream(tmp_path, 20, 20, seed=73)
        code = main(["detect", str(path), "--n", "10", "--beta", "1000"])
        events = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert code == EXIT_ALARM
        alarms = [e["m"] for e in events[1:] if e["alarm"]]
        assert alarms and alarms[0] > 20  # fires after the change, not before
        assert {"m", "V", "W", "alarm"} <= set(events[1].keys())

    def test_empty_file_clean_exit(self, tmp_path, capsys):
        path = tmp_path / "empty.csv"
        path.write_text("")
        code = main(["detect", str(path), "--n", "10", "--beta", "100"])
        assert code == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_requires_exactly_one_threshold_source(self, tmp_path, capsys):
        path = self._write_stream(tmp_path, 2, 0, seed=74)
        assert main(["detect", str(path), "--n", "10"]) == EXIT_ERROR
        assert main([
            "detect", str(path), "--n", "10", "--beta", "10", "--threshold", "3",
        ]) == EXIT_ERROR

    def test_error_exit_on_missing_file(self, tmp_path):
        assert main(["detect", str(tmp_path / "nope.csv"), "--n", "10", "--beta", "10"]) == EXIT_ERROR

    def test_nonparametric_detector_flags(self, tmp_path, capsys):
        path = self._write_stream(tmp_path, 5, 0, seed=75)
        code = main([
            "detect", str(path), "--n", "10", "--detector", "nonparametric",
            "--m0", "0.9117", "--m1", "0.9467", "--threshold", "0.5",
        ])
        assert code in (EXIT_OK, EXIT_ALARM)


class TestSimulateCommand:
    def test_byte_identical_with_same_seed(self, tmp_path):
        out1, out2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
        for out in (out1, out2):
            assert main([
                "simulate", "--scenario", "paper-fig2", "--seed", "7", "--out", str(out),
            ]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_schema_and_records(self, tmp_path):
        out = tmp_path / "s.ndjson"
        assert main([
            "simulate", "--scenario", "prechange", "--horizon", "40",
            "--seed", "1", "--out", str(out),
        ]) == EXIT_OK
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["schema"].startswith("corrwatch.simulate/")
        assert header["mode"] == "model"
        assert len(lines) == 41
        record = json.loads(lines[1])
        assert record["m"] == 1 and 0.0 < record["V"] <= 1.0 and record["segment_J"] is None

    def test_raw_out_roundtrips_through_detect(self, tmp_path, capsys):
        raw = tmp_path / "raw.csv"
        out = tmp_path / "v.ndjson"
        assert main([
            "simulate", "--scenario", "paper-fig2-vector", "--seed", "3",
            "--out", str(out), "--raw-out", str(raw),
        ]) == EXIT_OK
        assert sum(1 for _ in open(raw)) == 2000 * 10
        code = main(["detect", str(raw), "--n", "10", "--beta", "5000"])
        events = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert code == EXIT_ALARM
        first_alarm = next(e["m"] for e in events[1:] if e["alarm"])
        assert 500 <= first_alarm <= 600  # alarms shortly after the change point

    def test_model_scenario_rejects_raw_out(self, tmp_path):
        assert main([
            "simulate", "--scenario", "paper-fig2", "--seed", "1",
            "--out", str(tmp_path / "x.ndjson"), "--raw-out", str(tmp_path / "r.csv"),
        ]) == EXIT_ERROR


class TestFitCommand:
    def test_fit_identity_stream(self, tmp_path, capsys):
        rng = np.random.default_rng(76)
        rows = mvn_batches(identity_covariance(100), 10, 400, rng).reshape(-1, 100)
        path = tmp_path / "obs.csv"
        write_rows(path, rows)
        hist = tmp_path / "hist.csv"
        code = main(["fit", str(path), "--n", "10", "--bins", "30", "--hist-out", str(hist)])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"j_hat", "ks", "sample_count", "n", "p"}
        assert payload["sample_count"] == 400 and payload["p"] == 100
        assert 0.7 <= payload["j_hat"] <= 1.4
        lines = hist.read_text().splitlines()
        assert lines[0] == "bin_left,bin_right,density" and len(lines) == 31


class TestBenchCommand:
    def test_manual_run_csv_schema(self, tmp_path):
        out = tmp_path / "oc.csv"
        code = main([
            "bench", "--detector", "robust", "--jbar", "2", "--thresholds", "2.0,3.0",
            "--post-j", "2", "--trials", "40", "--seed", "5", "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "spec_id,A,log_mfa,log_mfa_se,wadd,wadd_se,trials,censored"
        assert len(lines) == 3
        fields = lines[1].split(",")
        assert fields[0] == "robust(jbar=2)" and int(fields[6]) == 40


class TestDensityCommand:
    def test_grid_csv(self, tmp_path):
        out = tmp_path / "density.csv"
        code = main([
            "density", "--n", "10", "--p", "100", "--J", "1", "--grid", "512",
            "--out", str(out),
        ])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "v,pdf,cdf"
        assert len(lines) == 513
        last = lines[-1].split(",")
        assert float(last[0]) == 1.0 and float(last[2]) == 1.0
