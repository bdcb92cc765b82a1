import json
import subprocess
import sys

import numpy as np
import pytest

from nvmag.cli import run
from nvmag.constants import ODMR_LINE_CENTERS
from nvmag.streams import Unit, read_stream


def run_ok(*argv):
    assert run([str(a) for a in argv]) == 0


def load(path):
    return json.loads(path.read_text())


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


def test_fit_bias(tmp_path, capsys):
    run_ok("fit-bias", "--config", write_cfg(tmp_path / "c.json", {"line_centers_hz": ODMR_LINE_CENTERS.tolist()}), "--out", tmp_path / "o")
    doc = load(tmp_path / "o" / "fit_bias.json")
    assert doc["provenance"]["command"] == "fit-bias"
    assert doc["provenance"]["config"]["seed"] == 0
    np.testing.assert_allclose(doc["result"]["params"]["bias_field_t"], [3.54e-3, 1.73e-3, 6.95e-3], atol=1e-5)
    assert json.loads(capsys.readouterr().out)["command"] == "fit-bias"


def test_fit_bias_from_text_file(tmp_path):
    (tmp_path / "lines.txt").write_text("\n".join(repr(float(v)) for v in ODMR_LINE_CENTERS))
    run_ok("fit-bias", "--config", write_cfg(tmp_path / "c.json", {"input": str(tmp_path / "lines.txt")}), "--out", tmp_path)
    assert (tmp_path / "fit_bias.json").exists()


@pytest.mark.parametrize("command, name", [("fit-bias", "fit_bias.json"), ("linearize", "sensing_matrix.json"), ("sensitivity", "sensitivity.json"), ("walsh", "walsh.json")])
def test_rerun_from_embedded_config_is_bit_identical(tmp_path, command, name):
    cfg = {"line_centers_hz": ODMR_LINE_CENTERS.tolist()} if command == "fit-bias" else {}
    if command == "walsh":
        cfg = {"trials": 2000, "seed": 4}
    run_ok(command, "--config", write_cfg(tmp_path / "c.json", cfg), "--out", tmp_path / "a")
    run_ok(command, "--config", tmp_path / "a" / name, "--out", tmp_path / "b")
    assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_pipeline_rerun_bit_identical(tmp_path):
    run_ok("pipeline", "--seed", 3, "--out", tmp_path / "a")
    run_ok("pipeline", "--config", tmp_path / "a" / "pipeline.json", "--out", tmp_path / "b")
    for name in ("pipeline.json", "field.csv", "spectra.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    doc = load(tmp_path / "a" / "pipeline.json")
    assert doc["provenance"]["seed"] == 3
    measured = [t["measured_rms_t"] for t in doc["result"]["coil_tones"]]
    np.testing.assert_allclose(measured, [8.12e-9, 9.56e-9, 9.86e-9], rtol=0.02)
    header = (tmp_path / "a" / "field.csv").read_text().splitlines()[0]
    assert header == "t_s,b_x_T,b_y_T,b_z_T"


def test_seed_override_changes_output(tmp_path):
    run_ok("synth", "--seed", 1, "--out", tmp_path / "a")
    run_ok("synth", "--seed", 2, "--out", tmp_path / "b")
    a, b = read_stream(tmp_path / "a" / "signal.nvms"), read_stream(tmp_path / "b" / "signal.nvms")
    assert not a == b
    assert load(tmp_path / "b" / "synth.json")["provenance"]["config"]["seed"] == 2


def test_synth_demod_reconstruct_chain(tmp_path):
    s, d, r = tmp_path / "s", tmp_path / "d", tmp_path / "r"
    run_ok("synth", "--calibrate", "--out", s)
    assert load(s / "slopes.json")["result"]["slopes_v_per_hz"]
    demod_cfg = {"input": str(s / "signal.nvms"), "reference": str(s / "reference.nvms"), "slopes": str(s / "slopes.json")}
    run_ok("demod", "--config", write_cfg(tmp_path / "d.json", demod_cfg), "--out", d)
    names = ["lambda", "chi", "phi", "kappa"]
    shifts = [read_stream(d / f"shift_{n}.nvms") for n in names]
    assert all(x.unit is Unit.HERTZ for x in shifts)
    run_ok("linearize", "--out", tmp_path / "m")
    rc_cfg = {"inputs": [str(d / f"shift_{n}.nvms") for n in names], "matrix": str(tmp_path / "m" / "sensing_matrix.json")}
    run_ok("reconstruct", "--config", write_cfg(tmp_path / "r.json", rc_cfg), "--out", r)
    bx = read_stream(r / "b_x.nvms")
    assert bx.unit is Unit.TESLA and len(bx) == len(shifts[0])
    assert (r / "field.csv").exists() and (d / "shifts.csv").exists()
    # the 67 Hz x-coil dominates b_x after the filters settle
    spec = np.abs(np.fft.rfft(bx.samples[-1352:]))
    f = np.fft.rfftfreq(1352, 1 / bx.rate)
    assert f[np.argmax(spec[1:]) + 1] == pytest.approx(67.0, abs=2.0)


def test_malformed_config_exits_1(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    assert run(["fit-bias", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_unknown_key_exits_1(tmp_path):
    assert run(["sensitivity", "--config", str(write_cfg(tmp_path / "c.json", {"bogus": 1})), "--out", str(tmp_path)]) == 1


def test_missing_input_exits_1(tmp_path):
    cfg = {"input": str(tmp_path / "none.nvms"), "slopes": [1e-8] * 4}
    assert run(["demod", "--config", str(write_cfg(tmp_path / "c.json", cfg)), "--out", str(tmp_path)]) == 1


def test_corrupt_stream_exits_1(tmp_path):
    (tmp_path / "x.nvms").write_bytes(b"garbage")
    cfg = {"input": str(tmp_path / "x.nvms"), "slopes": [1e-8] * 4}
    assert run(["demod", "--config", str(write_cfg(tmp_path / "c.json", cfg)), "--out", str(tmp_path)]) == 1


def test_wrong_command_embedded_config_exits_1(tmp_path):
    run_ok("linearize", "--out", tmp_path)
    assert run(["sensitivity", "--config", str(tmp_path / "sensing_matrix.json"), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exits_2(tmp_path, capsys):
    cfg = {"point": {"bias_field_t": [0.0, 0.0, 0.0]}}
    assert run(["linearize", "--config", str(write_cfg(tmp_path / "c.json", cfg)), "--out", str(tmp_path)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_bad_arguments_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 1
    assert run(["walsh", "--seed", "-3", "--out", str(tmp_path)]) == 1


def test_sensitivity_reference_matrix(tmp_path):
    run_ok("sensitivity", "--config", write_cfg(tmp_path / "c.json", {"matrix": "reference"}), "--out", tmp_path)
    eta = load(tmp_path / "sensitivity.json")["result"]["eta_t_per_rthz"]
    np.testing.assert_allclose(eta, [18.1e-12, 18.4e-12, 17.5e-12], rtol=0.02)


def test_console_entry_points(tmp_path):
    for cmd in (["nvmag"], [sys.executable, "-m", "nvmag"]):
        proc = subprocess.run(cmd + ["sensitivity", "--out", str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["command"] == "sensitivity"
