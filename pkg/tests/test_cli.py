import json
import subprocess
import sys

import numpy as np
import pytest

from masersense import cli
from masersense.config import example_config_path
from masersense.dataio import load_spectrum_csv, sha256_file, write_spectrum_csv, write_trace_csv
from masersense.lineshape import measure_fwhm
from masersense.spectral_fit import BiLorentzianModel
from masersense.spectrum import Spectrum, TimeTrace

EXAMPLE = str(example_config_path())


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def load(path):
    return json.loads(path.read_text())


@pytest.fixture
def data_dir(tmp_path):
    f = np.linspace(1441.0, 1459.0, 1801)
    model = BiLorentzianModel(1.0, 1450.0, 0.13, 1.2, 1451.0, 1.3, 0.0)
    write_spectrum_csv(tmp_path / "spectrum.csv", Spectrum(f, model.values(f)))
    write_spectrum_csv(tmp_path / "background.csv", Spectrum(f, np.full_like(f, 0.0)))
    rng = np.random.default_rng(0)
    t = np.linspace(-2e-6, 2e-6, 4001)
    v = np.where(t < 0, 0.0, 0.014 * np.exp(-((t - 1e-6) / 3e-7) ** 2)) + rng.normal(0, 4.5e-4, t.size)
    write_trace_csv(tmp_path / "trace.csv", TimeTrace(t, v, B0_T=66e-6, freq_MHz=1448.45))
    B = np.linspace(0, 1.2e-4, 13)
    (tmp_path / "field.csv").write_text("field_T,amp_V\n" + "".join(
        f"{float(b)!r},{float(1e-3 * np.exp(5e4 * b))!r}\n" for b in B))
    (tmp_path / "manifest.toml").write_text(
        '[[file]]\npath = "spectrum.csv"\nrole = "spectrum"\n\n'
        '[[file]]\npath = "trace.csv"\nrole = "trace"\n\n'
        '[[file]]\npath = "field.csv"\nrole = "field-response"\n')
    return tmp_path


def test_threshold_reports_reference_value(capsys, tmp_path):
    code, out, _ = run(capsys, "threshold", "--config", EXAMPLE, "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_OK
    assert json.loads(out)["status"] == "ok"
    doc = load(tmp_path / "o" / "threshold.json")
    assert doc["threshold_inversion"] == pytest.approx(6.364e12, rel=1e-4)
    assert doc["slope_ratio_last_to_first"] == pytest.approx(287.3, rel=1e-3)


def test_lineshape_csv_fwhm(capsys, tmp_path):
    code, _, _ = run(capsys, "lineshape-sim", "--config", EXAMPLE, "--n-max", "6e12", "--out", str(tmp_path))
    assert code == 0
    spectrum = load_spectrum_csv(tmp_path / "lineshape_out.csv")
    assert measure_fwhm(spectrum) == pytest.approx(0.957, abs=2e-3)
    doc = load(tmp_path / "lineshape.json")
    assert doc["narrowing"]["amplitude_ratio"] == pytest.approx(508.5, rel=1e-6)


def test_sensitivity_from_config(capsys, tmp_path):
    code, _, _ = run(capsys, "sensitivity", "--config", EXAMPLE, "--out", str(tmp_path))
    assert code == 0
    doc = load(tmp_path / "sensitivity.json")
    assert round(doc["sensitivity"]["eta_pT_per_rtHz"]) == 42


def test_bandwidth_override(capsys, tmp_path):
    run(capsys, "sensitivity", "--config", EXAMPLE, "--bandwidth-hz", "2e9", "--out", str(tmp_path))
    assert load(tmp_path / "sensitivity.json")["sensitivity"]["eta_pT_per_rtHz"] == pytest.approx(42.2263 / 2, rel=1e-5)


def test_sensitivity_from_files(capsys, data_dir):
    code, _, err = run(capsys, "sensitivity", "--config", EXAMPLE, "--trace", str(data_dir / "trace.csv"),
                       "--field-response", str(data_dir / "field.csv"), "--out", str(data_dir / "o"))
    assert code == 0, err
    doc = load(data_dir / "o" / "sensitivity.json")
    assert doc["sensitivity"]["sigma_s"] == pytest.approx(4.5e-4, rel=0.1)
    assert doc["trace"]["snr_dB"] == pytest.approx(29.9, abs=1.0)
    # slope of 1e-3 exp(5e4 B) at the configured 66 uT bias
    assert doc["field_fit"]["slope_V_per_T"] == pytest.approx(50 * np.exp(3.3), rel=1e-6)
    assert doc["sensitivity"]["m_s"] == doc["field_fit"]["slope_V_per_T"]
    assert (data_dir / "o" / "field_response_fit.csv").exists()


@pytest.mark.parametrize("sub", ["threshold", "lv-dynamics", "lineshape-sim", "hfi"])
def test_byte_identical_reruns(capsys, tmp_path, sub):
    for name in ("a", "b"):
        assert run(capsys, sub, "--config", EXAMPLE, "--out", str(tmp_path / name))[0] == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_summary_provenance(capsys, data_dir):
    out = data_dir / "o"
    run(capsys, "fit", "--config", EXAMPLE, "--spectrum", str(data_dir / "spectrum.csv"), "--out", str(out))
    summary = load(out / "run_summary.json")
    assert summary["subcommand"] == "fit" and summary["seed"] == 0
    assert summary["inputs"] == {str(data_dir / "spectrum.csv"): sha256_file(data_dir / "spectrum.csv")}
    for name, digest in summary["artifacts"].items():
        assert sha256_file(out / name) == digest
    assert set(summary["versions"]) == {"masersense", "numpy", "python"}
    assert len(summary["config_sha256"]) == 64


def test_fit_subcommand(capsys, data_dir):
    code, _, err = run(capsys, "fit", "--config", EXAMPLE, "--spectrum", str(data_dir / "spectrum.csv"),
                       "--background", str(data_dir / "background.csv"), "--out", str(data_dir / "o"))
    assert code == 0, err
    doc = load(data_dir / "o" / "fit.json")
    assert doc["fit"]["converged"] and doc["background_points_clipped"] == 0
    assert doc["fit"]["parameters"]["hwhm1"] == pytest.approx(0.13, rel=1e-6)
    assert doc["linewidths_MHz"]["hwhm_low_component"] == pytest.approx(0.13, rel=1e-6)
    assert (data_dir / "o" / "fit_curve.csv").exists()


def test_report_chains_fit_and_sensitivity(capsys, data_dir):
    before = {p.name: p.read_bytes() for p in data_dir.iterdir()}
    code, _, err = run(capsys, "report", "--config", EXAMPLE, "--manifest", str(data_dir / "manifest.toml"),
                       "--out", str(data_dir / "o"))
    assert code == 0, err
    names = {p.name for p in (data_dir / "o").iterdir()}
    assert {"report.json", "run_summary.json"} <= names
    report = load(data_dir / "o" / "report.json")
    assert {"fit", "sensitivity"} <= set(report)
    # inputs are never modified
    assert before == {p.name: p.read_bytes() for p in data_dir.iterdir() if p.name in before}
    assert len(load(data_dir / "o" / "run_summary.json")["inputs"]) == 4


def test_json_format(capsys, tmp_path):
    assert run(capsys, "threshold", "--format", "json", "--out", str(tmp_path))[0] == 0
    doc = load(tmp_path / "threshold_curve.json")
    assert set(doc["columns"]) == {"inverted_spins", "photons", "slope"}
    assert not (tmp_path / "threshold_curve.csv").exists()


def error_doc(err):
    doc = json.loads(err)
    assert doc["status"] == "error"
    return doc


def test_validation_error_writes_nothing(capsys, tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[rates]\nkappa_c_per_s = -1\n")
    code, out, err = run(capsys, "threshold", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_VALIDATION and out == ""
    assert "rates.kappa_c_per_s" in error_doc(err)["errors"][0]
    assert not (tmp_path / "o").exists()


def test_hfi_without_densities_is_validation_error(capsys, tmp_path):
    code, _, err = run(capsys, "hfi", "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_VALIDATION
    assert "mandatory" in error_doc(err)["errors"][0]
    assert not (tmp_path / "o").exists()


def test_computation_error_writes_nothing(capsys, tmp_path):
    code, _, err = run(capsys, "lineshape-sim", "--n-max", "7e12", "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_COMPUTATION
    assert "threshold" in error_doc(err)["errors"][0]
    assert not (tmp_path / "o").exists()


def test_io_errors(capsys, tmp_path):
    code, _, err = run(capsys, "threshold", "--config", str(tmp_path / "absent.toml"), "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_IO
    code, _, err = run(capsys, "fit", "--spectrum", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_IO and "absent.csv" in error_doc(err)["errors"][0]
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "threshold", "--out", str(blocker / "sub"))
    assert code == cli.EXIT_IO
    assert not (tmp_path / "o").exists()


def test_malformed_input_reports_line(capsys, tmp_path):
    (tmp_path / "s.csv").write_text("1,2\n2,oops\n")
    code, _, err = run(capsys, "fit", "--spectrum", str(tmp_path / "s.csv"), "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_IO
    assert "s.csv:2" in error_doc(err)["errors"][0]


def test_missing_inputs(capsys, tmp_path):
    code, _, err = run(capsys, "fit", "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_VALIDATION and "--spectrum" in err
    cfg = tmp_path / "c.toml"
    cfg.write_text("[magnetometry]\ndelta_f_Hz = 5e8\n")
    code, _, err = run(capsys, "sensitivity", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == cli.EXIT_VALIDATION and "sigma_s_V" in err


def test_entry_point_runs_as_module(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "masersense.cli", "threshold", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "threshold.json").exists()
