from pathlib import Path

import pytest

from pabeam import config
from pabeam.beamform import Method
from pabeam.errors import ConfigError
from pabeam.runconfig import (
    RunConfig,
    apply_overrides,
    load_run_config,
    parse_run_config,
    preset_config,
    with_runtime,
)


def test_small_config_parses(small_config_text):
    cfg = parse_run_config(small_config_text)
    assert cfg.preset == "sim"
    assert cfg.methods == (Method.DAS, Method.DMAS, Method.EIBMV, Method.EIBMV_DMAS)
    assert cfg.geometry_m == 16
    assert cfg.grid().nz == 131
    assert cfg.subarray_length(Method.EIBMV) == 8
    assert cfg.targets() == [(0.0, pytest.approx(10e-3))]


def test_comments_and_blank_lines_are_ignored():
    cfg = parse_run_config("# header\n\nmethods = DAS   # trailing\n")
    assert cfg.methods == (Method.DAS,)


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError, match=r"第 2 行.*'geometry.nope'"):
        parse_run_config("methods = DAS\ngeometry.nope = 3\n")


def test_bad_value_names_key_and_line():
    with pytest.raises(ConfigError, match=r"第 3 行.*'grid.nx'"):
        parse_run_config("methods = DAS\n\ngrid.nx = many\n")


def test_missing_equals_is_reported():
    with pytest.raises(ConfigError, match="第 1 行"):
        parse_run_config("methods DAS\n")


def test_duplicate_key_reports_both_lines():
    with pytest.raises(ConfigError, match=r"第 3 行.*第 1 行"):
        parse_run_config("methods = DAS\ngrid.nx = 10\nmethods = MV\n")


def test_methods_are_required():
    with pytest.raises(ConfigError, match="methods"):
        parse_run_config("grid.nx = 10\n")


def test_unknown_method_is_rejected():
    with pytest.raises(ConfigError):
        parse_run_config("methods = DAS, CAPON\n")


def test_aperture_expressions():
    cfg = parse_run_config("methods = MV, EIBMV\nbeamform.l = M/4\nEIBMV.l = 20\n")
    assert cfg.subarray_length(Method.MV) == 32
    assert cfg.subarray_length(Method.EIBMV) == 20


def test_default_loading_is_one_over_ten_l():
    cfg = parse_run_config("methods = EIBMV\nbeamform.delta = 1/10L\n")
    assert cfg.beamform_delta is None
    assert cfg.beamformer_config(Method.EIBMV).cov.delta == pytest.approx(1 / 640)


def test_per_method_overrides_take_precedence():
    cfg = parse_run_config("methods = EIBMV, EIBMV_DMAS\nEIBMV_DMAS.sigma = 0.5\neibmv-dmas.k = 0\n")
    dmas_cov = cfg.beamformer_config(Method.EIBMV_DMAS).cov
    assert (dmas_cov.sigma, dmas_cov.K) == (0.5, 0)
    eib_cov = cfg.beamformer_config(Method.EIBMV).cov
    assert (eib_cov.sigma, eib_cov.K) == (0.7, 5)


def test_per_method_duplicate_spellings_collide():
    with pytest.raises(ConfigError, match="重复"):
        parse_run_config("methods = EIBMV\nEIBMV.sigma = 0.5\neibmv.SIGMA = 0.6\n")


@pytest.mark.parametrize(
    "name, length, k, sigma, dynamic_range",
    [("sim", 64, 5, 0.7, 60.0), ("exp", 42, 0, 0.8, 80.0)],
)
def test_presets(name, length, k, sigma, dynamic_range):
    cfg = preset_config(name).validate()
    cov = cfg.beamformer_config(Method.EIBMV).cov
    assert cov.L == length
    assert cov.K == k
    assert cov.sigma == sigma
    assert cfg.display_dynamic_range_db == dynamic_range
    assert cfg.output_dir == config.OUTPUT_DIR / name


def test_sim_preset_matches_field_defaults():
    sim = preset_config("sim")
    assert sim.to_flat() == RunConfig(output_dir=config.OUTPUT_DIR / "sim").to_flat()
    assert len(sim.targets()) == 5
    assert sim.fs_axial() == pytest.approx(50e6, rel=1e-3)


def test_exp_preset_targets_and_band():
    exp = preset_config("exp")
    assert [round(z * 1e3, 6) for _, z in exp.targets()] == [7.0, 11.0]
    assert exp.bandpass().f_hi == pytest.approx(31.875e6)


def test_default_band_follows_pulse_frequency():
    cfg = parse_run_config("methods = DMAS\npulse.f0_mhz = 8\n")
    band = cfg.bandpass()
    assert band.f_lo == pytest.approx(12e6)
    assert band.f_hi == pytest.approx(30e6)
    assert cfg.to_flat()["bandpass.f_lo_mhz"] == "auto"


def test_explicit_band_edge_is_kept():
    cfg = parse_run_config("methods = DMAS\npulse.f0_mhz = 8\nbandpass.f_hi_mhz = 20\n")
    band = cfg.bandpass()
    assert band.f_lo == pytest.approx(12e6)
    assert band.f_hi == pytest.approx(20e6)

    echoed = parse_run_config(cfg.to_text())
    assert echoed.bandpass().f_hi == pytest.approx(20e6)
    assert echoed.bandpass().f_lo == pytest.approx(12e6)


def test_sim_band_is_six_to_fifteen():
    band = preset_config("sim").bandpass()
    assert (band.f_lo, band.f_hi) == pytest.approx((6e6, 15e6))


def test_file_preset_is_used():
    cfg = parse_run_config("preset = exp\nmethods = DAS\n")
    assert cfg.preset == "exp"
    assert cfg.geometry_fs_mhz == 80.0


def test_conflicting_presets_are_rejected():
    with pytest.raises(ConfigError, match="冲突"):
        parse_run_config("preset = exp\nmethods = DAS\n", preset="sim")


def test_unknown_preset_is_rejected():
    with pytest.raises(ConfigError):
        preset_config("bench")


@pytest.mark.parametrize(
    "text, key",
    [
        ("methods = MV\nbeamform.l = 65\n", "MV.l"),
        ("methods = DMAS\ngrid.nz = 100\n", "bandpass"),
        ("methods = DAS\nmetrics.depths_mm = 60\n", "metrics.depths_mm"),
        ("methods = DAS\nrun.threads = 0\n", "run.threads"),
        ("methods = EIBMV_DMAS\ngeometry.m = 3\nbeamform.l = 1\n", "geometry.m"),
        ("methods = EIBMV\nbeamform.sigma = 1.0\n", "EIBMV.l"),
    ],
)
def test_cross_field_validation_names_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_run_config(text)


def test_text_form_reads_back(small_config_text):
    cfg = parse_run_config(small_config_text + "EIBMV.sigma = 0.5\n")
    again = parse_run_config(cfg.to_text())
    assert again.to_flat() == cfg.to_flat()


def test_load_run_config_reports_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.cfg")


def test_load_run_config_reads_file(small_config_file):
    assert load_run_config(small_config_file).geometry_m == 16


def test_apply_overrides_accepts_native_values():
    cfg = apply_overrides(
        preset_config("sim"),
        {"grid.nx": 64, "metrics.depths_mm": [25, 30], "EIBMV.sigma": 0.8, "methods": "DAS, EIBMV"},
    )
    assert cfg.grid_nx == 64
    assert cfg.metrics_depths_mm == (25.0, 30.0)
    assert cfg.beamformer_config(Method.EIBMV).cov.sigma == 0.8
    assert cfg.methods == (Method.DAS, Method.EIBMV)


def test_apply_overrides_rejects_preset_and_unknown_keys():
    with pytest.raises(ConfigError):
        apply_overrides(preset_config("sim"), {"preset": "exp"})
    with pytest.raises(ConfigError, match="'grid.depth'"):
        apply_overrides(preset_config("sim"), {"grid.depth": 3})


def test_with_runtime_only_changes_runtime_fields(tmp_path):
    base = preset_config("sim")
    cfg = with_runtime(base, output_dir=tmp_path, threads=4)
    assert cfg.output_dir == Path(tmp_path)
    assert cfg.run_threads == 4
    assert cfg.grid() == base.grid()
    assert with_runtime(base) is base
    with pytest.raises(ConfigError):
        with_runtime(base, threads=0)


def test_profile_grid_is_centred_on_the_target(small_config_text):
    cfg = parse_run_config(small_config_text)
    patch = cfg.profile_grid(0.5e-3, 10e-3)
    assert patch.nx == 201
    assert patch.x[patch.nx // 2] == pytest.approx(0.5e-3, abs=1e-15)
    assert patch.z[patch.nz // 2] == pytest.approx(10e-3, abs=1e-15)
    assert patch.dx == pytest.approx(0.02e-3)
    assert patch.dz == pytest.approx(cfg.grid().dz)
    assert patch.z[-1] - patch.z[0] >= 2e-3


def test_zero_profile_step_uses_image_rows():
    cfg = parse_run_config("methods = DAS\nprofile.step_mm = 0\n")
    assert cfg.profile_grid(0.0, 30e-3) is None


@pytest.mark.parametrize(
    "line",
    ["profile.step_mm = -0.1", "profile.half_width_mm = 0.01", "profile.axial_mm = 0"],
)
def test_profile_settings_are_validated(line):
    with pytest.raises(ConfigError, match="profile"):
        parse_run_config(f"methods = DAS\n{line}\n")
