import json

import numpy as np
import pytest

import pabeam.runner as runner_module
from pabeam import io
from pabeam.beamform import Method
from pabeam.cli import main, parse_args
from pabeam.errors import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, NumericalError
from pabeam.runconfig import parse_run_config, with_runtime
from pabeam.runner import (
    GRID_FILE,
    METRICS_FILE,
    RF_FILE,
    TABLE_FILE,
    PipelineRunner,
    cmd_synth,
    failure_counts,
    profile_name,
)
from pabeam.state import StateManager

METHODS = ("DAS", "DMAS", "EIBMV", "EIBMV_DMAS")


def _artifacts(out_dir):
    """输出目录中除日志以外的全部文件内容"""
    return {
        p.relative_to(out_dir).as_posix(): p.read_bytes()
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and "logs" not in p.relative_to(out_dir).parts
    }


def _run(*args, state_dir):
    return main([*map(str, args), "--state-dir", str(state_dir)])


def test_parse_args_defaults():
    args = parse_args(["beamform", "--rf", "x.parf", "--threads", "2"])
    assert args.command == "beamform"
    assert str(args.rf) == "x.parf"
    assert args.threads == 2
    assert args.preset is None


def test_parse_args_rejects_zero_threads():
    with pytest.raises(SystemExit):
        parse_args(["synth", "--threads", "0"])


def test_pipeline_writes_every_artifact(tmp_path, small_config_file):
    out = tmp_path / "out"
    code = _run("pipeline", "--config", small_config_file, "--out", out, state_dir=tmp_path / "state")
    assert code == EXIT_OK

    for name in (RF_FILE, GRID_FILE, METRICS_FILE, TABLE_FILE, "manifest.json"):
        assert (out / name).exists(), name
    for method in METHODS:
        assert (out / f"{method}.pgm").exists()
        assert (out / f"{method}_db.npy").exists()
        assert (out / f"{method}_envelope.npy").exists()
        assert (out / profile_name(Method(method), 10.0)).exists()

    db = np.load(out / "DAS_db.npy")
    assert db.shape == (17, 131)
    assert db.max() == 0.0

    rows = io.read_csv_metrics(out / METRICS_FILE)
    assert [r.method for r in rows] == list(METHODS)
    assert all(r.depth_mm == pytest.approx(10.0) for r in rows)

    header = (out / TABLE_FILE).read_text(encoding="utf-8").splitlines()[0].split(",")
    assert header == ["depth_mm"] + [f"snr_db_{m}" for m in METHODS] + [f"fwhm_mm_{m}" for m in METHODS]

    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 20180101
    assert manifest["config"]["values"]["geometry.m"] == "16"


def test_pipeline_rerun_is_bit_identical(tmp_path, small_config_file):
    out = tmp_path / "out"
    state = tmp_path / "state"
    assert _run("pipeline", "--config", small_config_file, "--out", out, state_dir=state) == EXIT_OK
    first = _artifacts(out)
    assert _run("pipeline", "--config", small_config_file, "--out", out, state_dir=state) == EXIT_OK
    assert _artifacts(out) == first


def test_thread_count_does_not_change_artifacts(tmp_path, small_config_file):
    state = tmp_path / "state"
    one, many = tmp_path / "one", tmp_path / "many"
    assert _run("pipeline", "--config", small_config_file, "--out", one, "--threads", 1, state_dir=state) == EXIT_OK
    assert _run("pipeline", "--config", small_config_file, "--out", many, "--threads", 4, state_dir=state) == EXIT_OK

    a, b = _artifacts(one), _artifacts(many)
    # manifest 回显了 output.dir 和 run.threads，其余文件必须逐字节一致
    a.pop("manifest.json")
    b.pop("manifest.json")
    assert a == b


def test_bad_config_aborts_before_synthesis(tmp_path, small_config_text, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text(small_config_text + "noise.seed = many\n", encoding="utf-8")
    out = tmp_path / "out"

    code = _run("pipeline", "--config", cfg_path, "--out", out, state_dir=tmp_path / "state")
    assert code == EXIT_CONFIG
    assert not (out / RF_FILE).exists()
    assert "noise.seed" in capsys.readouterr().err


def test_missing_methods_key_is_a_config_error(tmp_path, capsys):
    cfg_path = tmp_path / "nomethods.cfg"
    cfg_path.write_text("geometry.m = 16\n", encoding="utf-8")
    assert _run("synth", "--config", cfg_path, "--out", tmp_path / "out", state_dir=tmp_path / "state") == EXIT_CONFIG
    assert "methods" in capsys.readouterr().err


def test_synth_with_sim_preset(tmp_path):
    out = tmp_path / "sim"
    assert _run("synth", "--preset", "sim", "--out", out, state_dir=tmp_path / "state") == EXIT_OK
    frame, geom = io.read_rf(out / RF_FILE)
    assert frame.samples.shape == (128, 2048)
    assert frame.fs == 50e6
    assert geom.m_elements == 128


def test_synth_is_reproducible(tmp_path, small_config_file):
    state = tmp_path / "state"
    for name in ("a", "b"):
        assert _run("synth", "--config", small_config_file, "--out", tmp_path / name, state_dir=state) == EXIT_OK
    assert (tmp_path / "a" / RF_FILE).read_bytes() == (tmp_path / "b" / RF_FILE).read_bytes()


def test_metrics_lists_missing_methods(tmp_path, small_config_text, capsys):
    out = tmp_path / "out"
    state = tmp_path / "state"
    das_only = tmp_path / "das.cfg"
    das_only.write_text(small_config_text.replace("DAS, DMAS, EIBMV, EIBMV_DMAS", "DAS"), encoding="utf-8")
    assert _run("pipeline", "--config", das_only, "--out", out, state_dir=state) == EXIT_OK

    full = tmp_path / "full.cfg"
    full.write_text(small_config_text, encoding="utf-8")
    code = _run("metrics", "--config", full, "--out", out, state_dir=state)
    assert code == EXIT_IO
    err = capsys.readouterr().err
    assert "EIBMV_DMAS" in err and "DMAS" in err


def test_metrics_refuses_mismatched_grid(tmp_path, small_config_text):
    out = tmp_path / "out"
    state = tmp_path / "state"
    cfg_path = tmp_path / "small.cfg"
    cfg_path.write_text(small_config_text, encoding="utf-8")
    assert _run("pipeline", "--config", cfg_path, "--out", out, state_dir=state) == EXIT_OK

    other = tmp_path / "other.cfg"
    other.write_text(small_config_text.replace("grid.nx = 17", "grid.nx = 21"), encoding="utf-8")
    assert _run("metrics", "--config", other, "--out", out, state_dir=state) == EXIT_IO


def test_beamform_without_rf_file_is_an_io_error(tmp_path, small_config_file):
    code = _run("beamform", "--config", small_config_file, "--out", tmp_path / "empty", state_dir=tmp_path / "state")
    assert code == EXIT_IO


def test_beamform_rejects_rf_from_other_geometry(tmp_path, small_config_text, small_config_file):
    state = tmp_path / "state"
    other = tmp_path / "m32.cfg"
    other.write_text(small_config_text.replace("geometry.m = 16", "geometry.m = 32"), encoding="utf-8")
    assert _run("synth", "--config", other, "--out", tmp_path / "rf32", state_dir=state) == EXIT_OK

    code = _run(
        "beamform", "--config", small_config_file, "--out", tmp_path / "out",
        "--rf", tmp_path / "rf32" / RF_FILE, state_dir=state,
    )
    assert code == EXIT_CONFIG


def test_numerical_failure_exit_code(tmp_path, small_config_file, monkeypatch):
    def broken(cfg):
        raise NumericalError("eigensolver did not converge")

    monkeypatch.setattr(runner_module, "cmd_synth", broken)
    code = _run("synth", "--config", small_config_file, "--out", tmp_path / "out", state_dir=tmp_path / "state")
    assert code == EXIT_NUMERICAL

    status = StateManager(tmp_path / "state").load_status()
    assert status["success"] is False
    assert status["exit_code"] == EXIT_NUMERICAL
    assert "converge" in status["last_error"]


def test_runner_records_status_and_history(tmp_path, small_config_text):
    cfg = with_runtime(parse_run_config(small_config_text), output_dir=tmp_path / "out")
    state = StateManager(tmp_path / "state")
    runner = PipelineRunner(state)

    result = runner.run("synth", cfg)
    assert result["success"] is True
    assert result["exit_code"] == 0
    assert result["result"]["m_channels"] == 16
    assert not runner.busy()

    runner.run("synth", cfg)
    history = state.load_history(10)
    assert len(history) == 2
    assert state.load_status()["stage"] == "synth"
    assert {"started_at", "ended_at", "duration_sec", "last_error"} <= set(history[0])


def test_failure_counts_reads_pipeline_results():
    result = {"result": {"beamform": {"methods": {"DAS": {"pixel_failures": 0}, "MV": {"pixel_failures": 3}}}}}
    assert failure_counts(result) == {"DAS": 0, "MV": 3}
    assert failure_counts({"result": {"rf_file": "x"}}) == {}


def test_cmd_synth_writes_manifest(tmp_path, small_config_text):
    cfg = with_runtime(parse_run_config(small_config_text), output_dir=tmp_path)
    result = cmd_synth(cfg)
    assert result["absorbers"] == 1
    assert StateManager.load_manifest(tmp_path)["software"]["name"] == "pabeam"


def test_metrics_refuses_other_profile_settings(tmp_path, small_config_text):
    out = tmp_path / "out"
    state = tmp_path / "state"
    cfg_path = tmp_path / "small.cfg"
    cfg_path.write_text(small_config_text, encoding="utf-8")
    assert _run("pipeline", "--config", cfg_path, "--out", out, state_dir=state) == EXIT_OK

    other = tmp_path / "other.cfg"
    other.write_text(small_config_text + "profile.step_mm = 0.05\n", encoding="utf-8")
    assert _run("metrics", "--config", other, "--out", out, state_dir=state) == EXIT_IO


def test_pipeline_reports_weight_diagnostics(tmp_path, small_config_text):
    cfg = with_runtime(parse_run_config(small_config_text), output_dir=tmp_path / "out")
    methods = runner_module.cmd_pipeline(cfg)["beamform"]["methods"]
    for name in ("EIBMV", "EIBMV_DMAS"):
        assert methods[name]["max_constraint_error"] <= 1e-8
        assert methods[name]["max_projected_sum_error"] >= 0.0
        assert methods[name]["pixel_failures"] == 0
    assert "max_projected_sum_error" not in methods["DAS"]


def test_profile_csv_is_finer_than_image_grid(tmp_path, small_config_text):
    cfg = with_runtime(parse_run_config(small_config_text), output_dir=tmp_path / "out")
    runner_module.cmd_pipeline(cfg)
    profile = io.read_csv_profile(tmp_path / "out" / profile_name(Method.EIBMV, 10.0))
    steps = np.diff(profile.positions_mm)
    np.testing.assert_allclose(steps, cfg.profile_step_mm, rtol=1e-9)
    assert profile.positions_mm[0] == pytest.approx(-cfg.profile_half_width_mm)
    assert profile.values_db.max() <= 0.0
