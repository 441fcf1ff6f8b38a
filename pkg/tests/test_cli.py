import csv
import io
import json
import shutil
import subprocess

import numpy as np
import pytest

from gqr import reports as rp
from gqr.cli import EXIT_BRANCH, EXIT_OK, EXIT_USAGE, main
from gqr.errors import DomainError


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def data_rows(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


class TestReportFormat:
    def test_header_and_float_format(self):
        rep = rp.Report("demo", ["scheme", "N_S", "x"], [{"scheme": "tmss", "N_S": 2.0, "x": 1 / 3},
                                                         {"scheme": "coherent", "N_S": 1.0, "x": np.nan}],
                        {"N_S": [1.0, 2.0]})
        lines = rep.to_csv().splitlines()
        assert lines[0].startswith("# gqr ") and lines[0].endswith(" demo")
        assert lines[1] == "# params: N_S=[1.00000000000e+00;2.00000000000e+00]"
        assert lines[2].startswith("# conventions: hbar=1")
        assert lines[3] == "scheme,N_S,x"
        assert lines[4] == "coherent,1.00000000000e+00,nan"
        assert lines[5] == "tmss,2.00000000000e+00,3.33333333333e-01"

    def test_json_matches_csv_values(self):
        rep = rp.Report("demo", ["N_S", "x"], [{"N_S": 1.0, "x": np.pi}, {"N_S": 0.5, "x": np.nan}])
        data = json.loads(rep.to_json())
        assert [r["N_S"] for r in data] == [0.5, 1.0]
        assert data[0]["x"] is None and data[1]["x"] == float(f"{np.pi:.11e}")

    def test_unknown_format(self):
        with pytest.raises(DomainError):
            rp.Report("demo", [], []).render("xml")

    def test_grid_expansion(self):
        assert rp.expand_grid({"log": [0, 2, 3]}) == [1.0, 10.0, 100.0]
        assert rp.expand_grid({"linear": [0, 1, 3]}) == [0.0, 0.5, 1.0]
        assert rp.expand_grid(0.3) == [0.3]
        with pytest.raises(DomainError):
            rp.expand_grid({"cubic": [0, 1, 2]})

    def test_sweep_spec_validation(self):
        with pytest.raises(DomainError):
            rp.SweepSpec.from_mapping({"n_s": [1.0], "bogus": 1})
        with pytest.raises(DomainError):
            rp.SweepSpec(kappa=[1.0])
        with pytest.raises(DomainError):
            rp.SweepSpec(outputs=["log10_p_err"])


class TestTable1:
    def test_rows(self, capsys):
        code, out = run(capsys, "table1", "--ns", "1", "--kappa", "0.5")
        assert code == EXIT_OK
        rows = {r["model"]: r for r in data_rows(out)}
        assert float(rows["tmss"]["closed_form"]) == pytest.approx(4.0)
        assert float(rows["model1"]["closed_form"]) == pytest.approx(12 / 7)
        # the single-mode Gaussian entry only has a leading-order closed form
        for name, r in rows.items():
            if name != "best_single_mode_gaussian":
                assert float(r["rel_dev_sld"]) <= 1e-5


class TestFigures:
    def test_fig2a_columns_and_sort(self, capsys):
        code, out = run(capsys, "fig2a", "--ns", "10,1", "--nb", "2,0")
        assert code == EXIT_OK
        rows = data_rows(out)
        assert list(rows[0]) == rp.FIG2A_COLUMNS
        keys = [(float(r["N_S"]), float(r["N_B"])) for r in rows]
        assert keys == sorted(keys) and len(keys) == 4

    def test_fig2a_nb0_matches_closed_form(self, capsys):
        _, out = run(capsys, "fig2a", "--ns", "3", "--nb", "0")
        r = data_rows(out)[0]
        assert float(r["scaled_qfi"]) == pytest.approx(float(r["nb0_closed_form"]), rel=1e-5)

    def test_fig2b_rows(self, capsys):
        code, out = run(capsys, "fig2b", "--ns", "0.1", "--m", "0,1e4", "--format", "json")
        assert code == EXIT_OK
        data = json.loads(out)
        assert {r["scheme"] for r in data} == {"coherent", "tmss", "model1", "model2"}
        for r in data:
            assert r["log10_bound"] >= r["log10_p_err"]

    def test_output_file(self, capsys, tmp_path):
        path = tmp_path / "a.csv"
        code, out = run(capsys, "fig2a", "--ns", "1", "--nb", "0", "--out", str(path))
        assert code == EXIT_OK and out == "" and path.read_text().startswith("# gqr")

    def test_worker_count_does_not_change_bytes(self, capsys, monkeypatch):
        outs = []
        for w in ("1", "2"):
            monkeypatch.setenv("GQR_WORKERS", w)
            outs.append(run(capsys, "fig2a", "--ns", "1,2,4", "--nb", "0,5")[1])
        assert outs[0] == outs[1]


class TestSweep:
    def test_config_and_flag_override(self, capsys, tmp_path):
        cfg = tmp_path / "s.yaml"
        cfg.write_text("schemes: [tmss, model1]\nn_s: {log: [0, 1, 2]}\nn_b: [0.5]\nkappa: [0.2]\n"
                       "outputs: [qfi_sld, closed_form]\nformat: json\n")
        code, out = run(capsys, "sweep", "--config", str(cfg))
        assert code == EXIT_OK
        data = json.loads(out)
        assert len(data) == 4
        for r in data:
            assert r["qfi_sld"] == pytest.approx(r["closed_form"], rel=1e-5)
        code, out = run(capsys, "sweep", "--config", str(cfg), "--schemes", "tmss", "--format", "csv")
        rows = data_rows(out)
        assert {r["scheme"] for r in rows} == {"tmss"} and len(rows) == 2

    def test_bound_ratio_reproducible(self, capsys):
        argv = ("sweep", "--schemes", "tmss", "--ns", "1", "--nb", "1", "--kappa", "0.3",
                "--outputs", "bound_ratio", "--seed", "5")
        a = run(capsys, *argv)[1]
        b = run(capsys, *argv)[1]
        assert a == b and float(data_rows(a)[0]["bound_ratio"]) <= 1 + 1e-6

    def test_bad_config_is_usage_error(self, capsys, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("kappa: [2.0]\n")
        assert main(["sweep", "--config", str(cfg)]) == EXIT_USAGE


class TestEquiv:
    def test_model1_table(self, capsys):
        code, out = run(capsys, "equiv", "--g", "0.4", "--kappa", "0.5")
        assert code == EXIT_OK
        assert "round-trip error" in out
        line = next(ln for ln in out.splitlines() if ln.startswith("TMS(I2,E)"))
        assert "not in diagram" in line and abs(float(line.split()[1])) > 1e-6

    def test_branch_failure_exit(self, capsys, tmp_path):
        circ = tmp_path / "c.yaml"
        circ.write_text("modes: [A]\nelements:\n  - {type: phase, modes: [A], value: 3.141592653589793}\n")
        code, out = run(capsys, "equiv", "--circuit", str(circ))
        assert code == EXIT_BRANCH and "branch failure" in out and "eigenvalues" in out

    def test_custom_circuit(self, capsys, tmp_path):
        circ = tmp_path / "c.yaml"
        circ.write_text("modes: [A, B]\nelements:\n  - {type: bs, modes: [A, B], value: 0.3}\n")
        code, out = run(capsys, "equiv", "--circuit", str(circ))
        assert code == EXIT_OK and "BS(A,B)" in out

    def test_unknown_element(self, capsys, tmp_path):
        circ = tmp_path / "c.yaml"
        circ.write_text("modes: [A]\nelements:\n  - {type: laser, modes: [A]}\n")
        assert main(["equiv", "--circuit", str(circ)]) == EXIT_USAGE


def test_verify_quick_subset(capsys):
    code, out = run(capsys, "verify", "--only", "7,10")
    assert code == EXIT_OK
    assert "[PASS] criterion 7" in out and "[PASS] criterion 10" in out and "2/2 criteria passed" in out


def test_missing_file_is_usage_error(capsys):
    assert main(["fig2a", "--config", "/nonexistent.yaml"]) == EXIT_USAGE


@pytest.mark.skipif(shutil.which("gqr") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["gqr", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("gqr ")
