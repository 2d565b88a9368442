import io

import pytest

from coop_arq.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main


def run(*argv):
    buf = io.StringIO()
    return main(list(argv), buf), buf.getvalue()


def test_spectra_rate1():
    rc, text = run("spectra", "rate-1", "--lines", "2")
    assert rc == EXIT_OK
    lines = text.splitlines()
    assert lines[0] == "d2,omega_per_step,omega_codeword"
    assert lines[1].startswith("10,1,")


def test_thresholds_both_methods():
    rc, a = run("thresholds", "--snr-db", "10,20")
    rc2, b = run("thresholds", "--method", "logscale", "--snr-db", "10,20")
    assert rc == rc2 == EXIT_OK
    assert len(a.splitlines()) == len(b.splitlines()) == 3
    row = a.splitlines()[1].split(",")
    assert float(row[4]) == pytest.approx(2 * float(row[3]))


def test_run_writes_file(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nsnr_db = 20\n")
    out = tmp_path / "o.csv"
    rc, text = run("run", "thresholds", "--config", str(cfg), "--out", str(out), "--seed", "7")
    assert rc == EXIT_OK and text == ""
    assert "# seed = 7" in out.read_text()


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\ntrials = 10\n")
    assert run("run", "saf-outage", "--config", str(cfg))[0] == EXIT_CONFIG
    assert run("run", "thresholds", "--out", str(tmp_path / "missing" / "x.csv"))[0] == EXIT_CONFIG


def test_numerical_error_exit_code(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nsnr_db = 0 1\n[throughput]\ntarget = 1e-9\n")
    assert run("run", "saf-lambda", "--config", str(cfg))[0] == EXIT_NUMERICAL


def test_bad_arguments_exit_nonzero():
    with pytest.raises(SystemExit) as e:
        main(["run", "no-such-scenario"], io.StringIO())
    assert e.value.code != 0
