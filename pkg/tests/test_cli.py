import json
import os
import subprocess
import sys

import pytest

from qpd.cli import main

SCAN_ARGS = [
    "scan", "--config", "xi", "--model", "rwa", "--na", "1",
    "--x1", "0:2:4", "--x2", "0:2:4", "--kmax", "6", "6", "--jobs", "1",
]


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


class TestScan:
    def test_writes_all_outputs(self, tmp_path):
        out = str(tmp_path / "run")
        assert main(SCAN_ARGS + ["--out", out]) == 0
        for suffix in ("surface", "fidelity", "separatrix", "simplex"):
            text = read(f"{out}_{suffix}.csv")
            assert text.startswith("# schema=1\n")
        meta = json.loads(read(f"{out}_meta.json"))
        assert meta["Na"] == 1 and meta["model"] == "rwa"
        surface = read(f"{out}_surface.csv").splitlines()
        assert surface[1].split(",")[:2] == ["x1", "x2"]
        assert len(surface) == 2 + 16  # header comment + header + 4x4 points
        origin = surface[2].split(",")
        assert origin[3] == "0:0"          # normal-region sector label
        assert float(origin[2]) == 0.0     # vacuum energy
        assert origin[-1] == "ok"

    def test_deterministic_rerun(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(SCAN_ARGS + ["--out", out1]) == 0
        assert main(SCAN_ARGS + ["--out", out2]) == 0
        for suffix in ("surface", "fidelity", "separatrix", "simplex"):
            assert read(f"{out1}_{suffix}.csv") == read(f"{out2}_{suffix}.csv")

    def test_meta_roundtrip(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(SCAN_ARGS + ["--out", out1]) == 0
        assert main(["scan", "--from-meta", f"{out1}_meta.json", "--out", out2]) == 0
        for suffix in ("surface", "fidelity", "separatrix", "simplex"):
            assert read(f"{out1}_{suffix}.csv") == read(f"{out2}_{suffix}.csv")
        meta1 = read(f"{out1}_meta.json")
        meta2 = read(f"{out2}_meta.json")
        assert meta1 == meta2

    def test_missing_model_is_config_error(self, tmp_path):
        rc = main(["scan", "--out", str(tmp_path / "x")])
        assert rc == 2

    def test_model_file(self, tmp_path):
        model = tmp_path / "model.cfg"
        model.write_text('config = "xi"\nNa = 1\n')
        out = str(tmp_path / "run")
        rc = main([
            "scan", "--model-file", str(model), "--model", "rwa",
            "--x1", "0:1:3", "--x2", "0:1:3", "--out", out, "--jobs", "1",
        ])
        assert rc == 0
        assert json.loads(read(f"{out}_meta.json"))["edges"] == [[1, 2, 1], [2, 3, 2]]


class TestPoint:
    def test_origin(self, capsys):
        rc = main([
            "point", "--config", "lambda", "--na", "1", "--model", "dicke",
            "--x", "0", "0",
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert "E_g = 0" in out
        assert "label = eo" in out  # atom in its lowest level
        assert "p = 1 0 0" in out

    def test_pair_metrics(self, capsys):
        rc = main([
            "point", "--config", "lambda", "--na", "1", "--model", "dicke",
            "--x", "1.0", "1.0", "--pair", "1.1", "1.0",
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert "Tr rhoA rhoB" in out and "D_B" in out

    def test_dump_matrix_format(self, tmp_path, capsys):
        dump = tmp_path / "h.txt"
        rc = main([
            "point", "--config", "xi", "--na", "1", "--model", "rwa",
            "--x", "3.0", "1.0", "--dump-matrix", str(dump),
        ])
        assert rc == 0
        lines = read(str(dump)).splitlines()
        dim, nnz = map(int, lines[0].split())
        assert dim > 1 and nnz > 0
        assert len(lines) == 1 + nnz
        row, col, _ = lines[1].split()
        assert int(row) <= int(col) < dim

    def test_dump_state(self, tmp_path, capsys):
        dump = tmp_path / "state.csv"
        rc = main([
            "point", "--config", "lambda", "--na", "1", "--model", "dicke",
            "--x", "2.12", "0.5", "--dump-state", str(dump),
        ])
        assert rc == 0
        lines = read(str(dump)).splitlines()
        assert lines[1] == "index,nu1,nu2,b1,b2,b3,amplitude"
        total = sum(float(l.split(",")[-1]) ** 2 for l in lines[2:])
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_amplitudes_listing(self, capsys):
        rc = main([
            "point", "--config", "lambda", "--na", "1", "--model", "rwa",
            "--x", "3.0", "0.2", "--amplitudes",
        ])
        out = capsys.readouterr().out
        assert rc == 0
        assert "amplitudes >=" in out
        assert "|" in out


class TestDims:
    def test_all_ok(self, capsys):
        rc = main(["dims", "--config", "v", "--na", "2", "--kmax", "4"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "MISMATCH" not in out
        assert out.count(" OK") == 25

    def test_unknown_config_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["dims", "--config", "foo"])
        assert exc.value.code == 2

    def test_missing_config(self, capsys):
        assert main(["dims"]) == 2


class TestClassify:
    def test_rethreshold_roundtrip(self, tmp_path):
        out = str(tmp_path / "run")
        assert main([
            "scan", "--config", "lambda", "--model", "dicke", "--na", "1",
            "--x1", "0:4:6", "--x2", "0:4:6", "--out", out, "--jobs", "1",
        ]) == 0
        before = read(f"{out}_separatrix.csv")
        out2 = str(tmp_path / "re")
        assert main(["classify", "--in", out, "--out", out2]) == 0
        assert read(f"{out2}_separatrix.csv") == before

    def test_stricter_threshold_drops_points(self, tmp_path):
        out = str(tmp_path / "run")
        assert main([
            "scan", "--config", "lambda", "--model", "dicke", "--na", "1",
            "--x1", "0:4:6", "--x2", "0:4:6", "--out", out, "--jobs", "1",
        ]) == 0
        out2 = str(tmp_path / "strict")
        assert main([
            "classify", "--in", out, "--out", out2, "--min-drop", "0.9999",
        ]) == 0
        strict = read(f"{out2}_separatrix.csv").splitlines()
        base = read(f"{out}_separatrix.csv").splitlines()
        assert len(strict) <= len(base)


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "qpd.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0

    def test_qpd_threads_env_override(self, tmp_path):
        env = dict(os.environ, QPD_THREADS="1")
        out = str(tmp_path / "run")
        proc = subprocess.run(
            [sys.executable, "-m", "qpd.cli"] + SCAN_ARGS + ["--out", out, "--jobs", "2"],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0
        meta = json.loads(read(f"{out}_meta.json"))
        assert meta["jobs"] == 1
