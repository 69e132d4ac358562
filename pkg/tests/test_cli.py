import os
from pathlib import Path

import pytest

from coalbm.cli import main


def run_cli(*argv):
    return main(list(argv))


class TestSimulate:
    def test_outputs_and_reproducibility(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            rc = run_cli("simulate", "--n", "8", "--m-max", "2",
                         "--replicates", "10", "--seed", "5", "--nu", "1.5",
                         "--out", str(out))
            assert rc == 0
        files_a = sorted(p.name for p in a.iterdir())
        files_b = sorted(p.name for p in b.iterdir())
        assert files_a == files_b
        assert any(f.startswith("branch_lengths_") for f in files_a)
        assert any(f.startswith("sfs_") for f in files_a)
        assert any(f.startswith("summary_") for f in files_a)
        for f in files_a:
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_zero_rate_means_zero_counts(self, tmp_path):
        rc = run_cli("simulate", "--n", "6", "--m-max", "1", "--replicates",
                     "5", "--seed", "2", "--nu", "0", "--out", str(tmp_path))
        assert rc == 0
        sfs = next(tmp_path.glob("sfs_*.csv")).read_text().splitlines()
        rows = [ln for ln in sfs if ln and not ln.startswith(("#", "replicate"))]
        assert rows and all(ln.split(",")[2] == "0" for ln in rows)

    def test_config_error_exit_code(self, tmp_path):
        rc = run_cli("simulate", "--n", "1", "--out", str(tmp_path))
        assert rc == 2

    def test_env_var_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COALBM_OUT", str(tmp_path / "envout"))
        rc = run_cli("simulate", "--n", "6", "--replicates", "3", "--seed", "8")
        assert rc == 0
        assert (tmp_path / "envout").exists()

    @pytest.mark.slow
    def test_worker_count_invariance(self, tmp_path):
        dirs = []
        for w in ("1", "2"):
            d = tmp_path / f"w{w}"
            rc = run_cli("simulate", "--n", "8", "--replicates", "12",
                         "--seed", "5", "--m-max", "2", "--workers", w,
                         "--out", str(d))
            assert rc == 0
            dirs.append(d)
        rows = []
        for d in dirs:
            text = next(d.glob("branch_lengths_*.csv")).read_text()
            rows.append([ln for ln in text.splitlines()
                         if not ln.startswith("#")])
        assert rows[0] == rows[1]

    def test_config_file_with_flag_override(self, tmp_path):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("n=6\nreplicates=4\nseed=11\nm_max=2\n")
        rc = run_cli("simulate", "--config", str(cfgfile), "--replicates",
                     "2", "--out", str(tmp_path))
        assert rc == 0
        summary = next(tmp_path.glob("summary_*.txt")).read_text()
        assert "replicates=2" in summary
        assert "# n=6" in summary


class TestValidate:
    def test_single_cheap_criterion_passes(self, tmp_path, capsys):
        rc = run_cli("validate", "--level", "quick", "--only", "c9",
                     "--out", str(tmp_path))
        out = capsys.readouterr().out
        assert rc == 0
        assert "PASS C9" in out
        assert (tmp_path / "validation_quick.txt").exists()

    def test_tampered_oracle_fails(self, monkeypatch, capsys):
        import coalbm.validate as validate

        def broken(a, b):
            return a + b  # wrong on purpose

        monkeypatch.setattr(validate, "expected_two_sided_exit", broken)
        rc = run_cli("validate", "--level", "quick", "--only", "c1")
        assert rc == 1
        assert "FAIL C1" in capsys.readouterr().out


class TestSmallTools:
    def test_pairtime(self, tmp_path, capsys):
        rc = run_cli("pairtime", "--d", "0.2", "--replicates", "4000",
                     "--seed", "3", "--out", str(tmp_path))
        assert rc == 0
        assert "KS distance" in capsys.readouterr().out
        assert list(tmp_path.glob("pairtime_*.csv"))

    def test_tripletime(self, tmp_path):
        rc = run_cli("tripletime", "--n", "10", "--m", "1", "--replicates",
                     "2000", "--seed", "3", "--t-max", "1.0",
                     "--out", str(tmp_path))
        assert rc == 0
        assert list(tmp_path.glob("tripletime_*.csv"))

    def test_tree_polyline_count(self, tmp_path):
        rc = run_cli("tree", "--n", "6", "--seed", "4", "--out", str(tmp_path))
        assert rc == 0
        text = next(tmp_path.glob("tree_*.txt")).read_text()
        body = [ln for ln in text.splitlines() if ln.startswith("block ")]
        assert len(body) == 11  # 6 leaves + 5 internal

    def test_sweep_small(self, tmp_path):
        rc = run_cli("sweep", "--grid", "10", "20", "--replicates", "60",
                     "--seed", "6", "--out", str(tmp_path))
        assert rc == 0
        rows = next(tmp_path.glob("sweep_*.csv")).read_text().splitlines()
        assert rows[-2].startswith("10,") and rows[-1].startswith("20,")
