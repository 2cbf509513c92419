"""
流水线各阶段：synth → beamform → metrics，以及记录运行状态的 PipelineRunner

输出目录布局：
    manifest.json               全部参数 + 种子 + 版本
    rf.parf                     合成 RF 数据
    grid.json                   网格 / 几何元数据（metrics 阶段校验）
    <METHOD>.pgm                16 位灰度图
    <METHOD>_db.npy             dB 矩阵 (nx, nz)
    <METHOD>_envelope.npy       对数压缩前的包络强度（SNR 使用）
    <METHOD>_profile_<d>mm.csv  过各目标点的细横向剖面（dB，不截断），FWHM / PSL 使用
    metrics.csv / table.csv     长表 / 按深度汇总的宽表
"""

import asyncio
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from . import __version__, io
from .beamform import Method, beamform_image
from .core import ArrayGeometry, RfFrame
from .errors import ArtifactError, ConfigError, PabeamError, exit_code_for
from .log import SEPARATOR, stage_scope
from .metrics import UNCLIPPED_RANGE_DB, LateralProfile, MetricRow, evaluate_target, lateral_profile, table_rows
from .post import DbImage, log_compress, process_image
from .runconfig import RunConfig
from .state import StateManager, now_iso, read_json, write_json
from .synth import add_noise, simulate_rf

RF_FILE = "rf.parf"
GRID_FILE = "grid.json"
METRICS_FILE = "metrics.csv"
TABLE_FILE = "table.csv"

STAGES = ("synth", "beamform", "metrics", "pipeline")


def _depth_tag(depth_mm: float) -> str:
    return f"{depth_mm:g}".replace(".", "p")


def profile_name(method: Method, depth_mm: float) -> str:
    return f"{method.value}_profile_{_depth_tag(depth_mm)}mm.csv"


def _manifest(cfg: RunConfig) -> Dict[str, Any]:
    return {
        "software": {"name": "pabeam", "version": __version__},
        "seed": cfg.noise_seed,
        "config": cfg.to_dict(),
    }


def _grid_metadata(cfg: RunConfig, geom: ArrayGeometry) -> Dict[str, Any]:
    return {
        "grid": cfg.grid().to_dict(),
        "geometry": {"m": geom.m_elements, "pitch": geom.pitch, "fs": geom.fs, "c": geom.c},
        "fs_axial_hz": cfg.fs_axial(),
        "dynamic_range_db": cfg.display_dynamic_range_db,
        "methods": [m.value for m in cfg.methods],
        "profile": _profile_settings(cfg),
    }


def _profile_settings(cfg: RunConfig) -> Dict[str, float]:
    return {
        "step_mm": cfg.profile_step_mm,
        "half_width_mm": cfg.profile_half_width_mm,
        "axial_mm": cfg.profile_axial_mm,
    }


# ============ synth ============

def synthesize(cfg: RunConfig) -> Tuple[RfFrame, ArrayGeometry]:
    geom = cfg.geometry()
    frame = simulate_rf(cfg.phantom(), geom, cfg.pulse(), cfg.rf_t_samples)
    return add_noise(frame, cfg.noise_snr_db, cfg.noise_seed), geom


def cmd_synth(cfg: RunConfig) -> Dict[str, Any]:
    out_dir = Path(cfg.output_dir)
    logging.info(SEPARATOR)
    logging.info(f"[synth] 生成 RF: M={cfg.geometry_m}, T={cfg.rf_t_samples}, SNR={cfg.noise_snr_db} dB, seed={cfg.noise_seed}")

    frame, geom = synthesize(cfg)
    rf_path = io.write_rf(frame, geom, out_dir / RF_FILE)
    StateManager.save_manifest(out_dir, _manifest(cfg))

    logging.info(f"✓ RF 已写入 {rf_path}")
    return {
        "rf_file": str(rf_path),
        "m_channels": frame.m_channels,
        "t_samples": frame.t_samples,
        "absorbers": cfg.phantom().count,
    }


# ============ beamform ============

def _check_rf_geometry(cfg: RunConfig, geom: ArrayGeometry) -> None:
    expected = cfg.geometry()
    pairs = {
        "geometry.m": (geom.m_elements, expected.m_elements),
        "geometry.pitch_mm": (geom.pitch, expected.pitch),
        "geometry.fs_mhz": (geom.fs, expected.fs),
        "geometry.c": (geom.c, expected.c),
    }
    for key, (found, wanted) in pairs.items():
        if not np.isclose(found, wanted, rtol=1e-9, atol=0.0):
            raise ConfigError(f"{key}: RF 文件中为 {found}，配置为 {wanted}")


def target_profile(
    frame: RfFrame,
    geom: ArrayGeometry,
    cfg: RunConfig,
    method: Method,
    envelope: np.ndarray,
    x: float,
    z: float,
) -> Tuple[LateralProfile, int]:
    """
    过目标点的横向剖面（dB，不截断），以及细剖面重建中的像素失败数

    profile.step_mm 为 0 时取成像网格最接近的一行。
    """
    depth_mm = z * 1e3
    patch = cfg.profile_grid(x, z)
    if patch is None:
        return lateral_profile(log_compress(envelope, UNCLIPPED_RANGE_DB), depth_mm, cfg.grid()), 0

    image = beamform_image(
        frame,
        patch,
        geom,
        cfg.beamformer_config(method),
        threads=cfg.run_threads,
        pixel_block=cfg.run_pixel_block,
    )
    patch_env, _ = process_image(
        image.values, method, cfg.fs_axial(), cfg.bandpass(), cfg.display_dynamic_range_db
    )
    wide = log_compress(patch_env, UNCLIPPED_RANGE_DB)
    row = patch.nz // 2
    return LateralProfile(positions_mm=patch.x * 1e3, values_db=wide.values[:, row]), image.failures


def write_method_artifacts(
    out_dir: Path,
    method: Method,
    envelope: np.ndarray,
    db_image: DbImage,
    profiles: Dict[float, LateralProfile],
) -> List[Path]:
    written = [
        io.write_pgm(db_image, out_dir / f"{method.value}.pgm"),
        io.write_npy(db_image.values, out_dir / f"{method.value}_db.npy"),
        io.write_npy(envelope, out_dir / f"{method.value}_envelope.npy"),
    ]
    for depth_mm, profile in profiles.items():
        written.append(io.write_csv_profile(profile, out_dir / profile_name(method, depth_mm)))
    return written


def cmd_beamform(cfg: RunConfig, rf_path: Optional[Path] = None) -> Dict[str, Any]:
    out_dir = Path(cfg.output_dir)
    rf_path = Path(rf_path) if rf_path else out_dir / RF_FILE
    frame, geom = io.read_rf(rf_path)
    _check_rf_geometry(cfg, geom)

    grid = cfg.grid()
    spec = cfg.bandpass()
    fs_axial = cfg.fs_axial()
    per_method: Dict[str, Dict[str, Any]] = {}

    for method in cfg.methods:
        bf_cfg = cfg.beamformer_config(method)
        logging.info(SEPARATOR)
        logging.info(f"[beamform] {method.value}: {bf_cfg.to_dict()}")

        image = beamform_image(
            frame,
            grid,
            geom,
            bf_cfg,
            threads=cfg.run_threads,
            pixel_block=cfg.run_pixel_block,
        )
        envelope, db_image = process_image(
            image.values, method, fs_axial, spec, cfg.display_dynamic_range_db
        )

        profiles: Dict[float, LateralProfile] = {}
        profile_failures = 0
        for x, z in cfg.targets():
            profile, failures = target_profile(frame, geom, cfg, method, envelope, x, z)
            profiles[z * 1e3] = profile
            profile_failures += failures
        write_method_artifacts(out_dir, method, envelope, db_image, profiles)

        per_method[method.value] = {
            "pixel_failures": image.failures + profile_failures,
            "max_constraint_error": image.max_constraint_error,
            "elapsed_sec": image.elapsed_sec,
            **image.extra,
        }

    write_json(out_dir / GRID_FILE, _grid_metadata(cfg, geom))
    StateManager.save_manifest(out_dir, _manifest(cfg))
    return {"rf_file": str(rf_path), "methods": per_method}


# ============ metrics ============

def _check_grid(cfg: RunConfig, image_dir: Path) -> None:
    meta = read_json(image_dir / GRID_FILE)
    if not meta:
        raise ArtifactError(f"{image_dir} 中缺少 {GRID_FILE}")
    if meta.get("grid") != cfg.grid().to_dict():
        raise ArtifactError(
            f"{GRID_FILE} 中的网格 {meta.get('grid')} 与配置 {cfg.grid().to_dict()} 不一致"
        )
    if meta.get("dynamic_range_db") != cfg.display_dynamic_range_db:
        raise ArtifactError("成像结果的动态范围与配置不一致")
    if meta.get("profile") != _profile_settings(cfg):
        raise ArtifactError(f"{GRID_FILE} 中的剖面设置 {meta.get('profile')} 与配置 {_profile_settings(cfg)} 不一致")


MethodImages = Tuple[DbImage, np.ndarray, Dict[float, LateralProfile]]


def _method_files(cfg: RunConfig, method: Method) -> List[str]:
    names = [f"{method.value}_db.npy", f"{method.value}_envelope.npy"]
    names += [profile_name(method, z * 1e3) for _, z in cfg.targets()]
    return names


def load_method_images(cfg: RunConfig, image_dir: Path) -> Dict[Method, MethodImages]:
    missing = [
        m.value
        for m in cfg.methods
        if not all((image_dir / name).exists() for name in _method_files(cfg, m))
    ]
    if missing:
        raise ArtifactError(f"{image_dir} 中缺少以下方法的成像结果: {', '.join(missing)}")

    grid = cfg.grid()
    images = {}
    for method in cfg.methods:
        db = io.read_npy(image_dir / f"{method.value}_db.npy")
        env = io.read_npy(image_dir / f"{method.value}_envelope.npy")
        if db.shape != (grid.nx, grid.nz) or env.shape != db.shape:
            raise ArtifactError(f"{method.value} 成像结果形状 {db.shape} 与网格 ({grid.nx}, {grid.nz}) 不一致")
        profiles = {
            z * 1e3: io.read_csv_profile(image_dir / profile_name(method, z * 1e3))
            for _, z in cfg.targets()
        }
        images[method] = (DbImage(values=db, dynamic_range=cfg.display_dynamic_range_db), env, profiles)
    return images


def compute_metrics(cfg: RunConfig, images: Dict[Method, MethodImages]) -> List[MetricRow]:
    grid = cfg.grid()
    rows: List[MetricRow] = []
    for method in cfg.methods:
        db_image, envelope, profiles = images[method]
        for x, z in cfg.targets():
            rows.append(
                evaluate_target(
                    method.value,
                    db_image,
                    envelope,
                    grid,
                    x,
                    z,
                    roi_size=cfg.roi_size_mm * 1e-3,
                    noise_offset=cfg.roi_noise_offset_mm * 1e-3,
                    profile=profiles[z * 1e3],
                )
            )
    return rows


def cmd_metrics(cfg: RunConfig, image_dir: Optional[Path] = None) -> Dict[str, Any]:
    image_dir = Path(image_dir) if image_dir else Path(cfg.output_dir)
    logging.info(SEPARATOR)
    logging.info(f"[metrics] 读取成像结果: {image_dir}")

    _check_grid(cfg, image_dir)
    rows = compute_metrics(cfg, load_method_images(cfg, image_dir))

    out_dir = Path(cfg.output_dir)
    methods = [m.value for m in cfg.methods]
    table = table_rows(rows, methods)
    columns = ["depth_mm"] + [f"snr_db_{m}" for m in methods] + [f"fwhm_mm_{m}" for m in methods]
    io.write_csv_metrics(rows, out_dir / METRICS_FILE)
    io.write_csv_table(table, columns, out_dir / TABLE_FILE)

    undefined = sum(
        1 for r in rows for v in (r.fwhm_mm, r.snr_db) if isinstance(v, float) and np.isnan(v)
    )
    if undefined:
        logging.warning(f"{undefined} 项指标无法计算，已记为 NaN")
    for row in rows:
        logging.info(
            f"  {row.method:<11} z={row.depth_mm:6.2f} mm  FWHM={row.fwhm_mm:.4f} mm  "
            f"SNR={row.snr_db:.2f} dB  PSL={row.psl_db:.2f} dB"
        )
    return {"rows": len(rows), "undefined_metrics": undefined, "metrics_file": str(out_dir / METRICS_FILE)}


# ============ pipeline ============

def cmd_pipeline(cfg: RunConfig) -> Dict[str, Any]:
    """依次执行三个阶段，任何一个阶段出错都会中止"""
    result: Dict[str, Any] = {}
    for name, command in (("synth", cmd_synth), ("beamform", cmd_beamform), ("metrics", cmd_metrics)):
        with stage_scope(name):
            result[name] = command(cfg)
    return result


_COMMANDS = {
    "synth": lambda cfg, path: cmd_synth(cfg),
    "beamform": lambda cfg, path: cmd_beamform(cfg, path),
    "metrics": lambda cfg, path: cmd_metrics(cfg, path),
    "pipeline": lambda cfg, path: cmd_pipeline(cfg),
}


class PipelineRunner:
    """
    执行单个阶段并把结果写入 status.json / history.jsonl。
    API 通过 run_async 在线程中执行，同一时间只允许一个任务。
    """

    def __init__(self, state: StateManager):
        self.state = state
        self._lock = asyncio.Lock()
        self._active_stage: Optional[str] = None

    def is_running(self) -> bool:
        return self._active_stage is not None

    @property
    def active_stage(self) -> Optional[str]:
        return self._active_stage

    def run(self, stage: str, cfg: RunConfig, path: Optional[Path] = None) -> Dict[str, Any]:
        """执行阶段；出错时先记录状态再把异常抛给调用方"""
        if stage not in _COMMANDS:
            raise ConfigError(f"未知阶段 '{stage}'（可选: {', '.join(STAGES)}）")

        start_ts = time.time()
        result: Dict[str, Any] = {
            "started_at": now_iso(),
            "ended_at": None,
            "duration_sec": None,
            "success": False,
            "stage": stage,
            "preset": cfg.preset,
            "output_dir": str(cfg.output_dir),
            "threads": cfg.run_threads,
            "last_error": None,
            "exit_code": None,
        }

        logging.info(SEPARATOR)
        logging.info(f"启动阶段 {stage}（预设={cfg.preset}，方法={', '.join(m.value for m in cfg.methods)}）")
        self._active_stage = stage
        error: Optional[BaseException] = None
        try:
            with stage_scope(stage):
                result["result"] = _COMMANDS[stage](cfg, path)
            result["success"] = True
        except PabeamError as e:
            logging.error(f"阶段 {stage} 失败: {e}")
            error = e
        except OSError as e:
            logging.error(f"阶段 {stage} I/O 失败: {e}")
            error = e
        except Exception as e:
            logging.exception(f"阶段 {stage} 出现未预期的错误: {e}")
            error = e
        finally:
            self._active_stage = None

        result["last_error"] = str(error) if error else None
        result["exit_code"] = exit_code_for(error) if error else 0
        result["ended_at"] = now_iso()
        result["duration_sec"] = round(time.time() - start_ts, 2)

        self.state.save_status(result)
        self.state.append_history(result)

        logging.info(SEPARATOR)
        logging.info(f"阶段 {stage} 结束（success={result['success']}，耗时={result['duration_sec']}s）")
        failures = failure_counts(result)
        if failures:
            logging.info(f"像素失败统计: {failures}")
        logging.info(SEPARATOR)

        if error is not None:
            raise error
        return result

    async def run_async(self, stage: str, cfg: RunConfig, path: Optional[Path] = None) -> Dict[str, Any]:
        async with self._lock:
            return await asyncio.to_thread(self.run, stage, cfg, path)

    def busy(self) -> bool:
        return self._lock.locked() or self.is_running()


def failure_counts(result: Dict[str, Any]) -> Dict[str, int]:
    """各方法的像素失败数；pipeline 结果取其中的 beamform 部分"""
    body = result.get("result") or {}
    methods = body.get("methods") or (body.get("beamform") or {}).get("methods") or {}
    return {name: info["pixel_failures"] for name, info in methods.items()}

