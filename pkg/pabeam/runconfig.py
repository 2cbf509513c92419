"""
运行配置（RunConfig）：按行的 key = value 文本

- `#` 之后为注释，空行忽略
- 未知键、重复键、非法值都会抛出 ConfigError，消息中带键名和行号
- 配置文件叠加在预设（sim / exp）之上，且必须给出 methods
- 子阵长度可写整数或 M/2、M/3 之类的孔径表达式；delta 可写数值或 1/10L
- 逐方法覆盖：EIBMV.sigma = 0.8、EIBMV_DMAS.k = 0 等，优先于 beamform.*
"""

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import config
from .beamform import ADAPTIVE_METHODS, BeamformerConfig, Method
from .core import ArrayGeometry, ImagingGrid
from .cov import CovConfig
from .errors import ConfigError
from .post import MIN_SCANLINE, BandpassSpec, axial_sampling_rate
from .synth import Phantom, PulseSpec, default_phantom

_APERTURE_RE = re.compile(r"^M\s*/\s*(\d+)$", re.IGNORECASE)
_AUTO_DELTA = {"1/10L", "1/(10L)", "AUTO"}
_COMMENT = "#"


# ============ 值解析器：输入原始字符串，失败抛 ValueError ============

def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    value = float(raw)
    if math.isnan(value):
        raise ValueError("不能为 NaN")
    return value


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in {"1", "true", "yes", "on"}:
        return True
    if value in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"不是布尔值: {raw}")


def _parse_list(raw: str) -> List[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _parse_methods(raw: str) -> Tuple[Method, ...]:
    methods = tuple(Method.parse(part) for part in _parse_list(raw))
    if not methods:
        raise ValueError("方法列表为空")
    if len(set(methods)) != len(methods):
        raise ValueError("方法列表有重复项")
    return methods


def _parse_method_set(raw: str) -> Tuple[Method, ...]:
    if raw.strip().lower() in {"", "none"}:
        return ()
    return tuple(sorted({Method.parse(part) for part in _parse_list(raw)}, key=lambda m: m.value))


def _parse_float_list(raw: str) -> Tuple[float, ...]:
    return tuple(_parse_float(part) for part in _parse_list(raw))


def _parse_points(raw: str) -> Tuple[Tuple[float, float], ...]:
    """'x,z; x,z' 形式的点列表（mm），空串表示使用等间距模体"""
    points = []
    for chunk in raw.split(";"):
        if not chunk.strip():
            continue
        coords = _parse_float_list(chunk)
        if len(coords) != 2:
            raise ValueError(f"点坐标应为 'x,z'，当前 '{chunk.strip()}'")
        points.append((coords[0], coords[1]))
    return tuple(points)


def _parse_aperture(raw: str) -> str:
    value = raw.strip()
    match = _APERTURE_RE.match(value)
    if match:
        if int(match.group(1)) < 1:
            raise ValueError("M/n 中 n 必须 ≥ 1")
        return f"M/{int(match.group(1))}"
    if int(value) < 1:
        raise ValueError("子阵长度必须 ≥ 1")
    return str(int(value))


def _parse_delta(raw: str) -> Optional[float]:
    if raw.strip().replace(" ", "").upper() in _AUTO_DELTA:
        return None
    value = _parse_float(raw)
    if value < 0:
        raise ValueError("delta 必须 ≥ 0")
    return value


def _parse_band_edge(raw: str) -> Optional[float]:
    if raw.strip().lower() == "auto":
        return None
    value = _parse_float(raw)
    if value <= 0:
        raise ValueError("频率必须 > 0")
    return value


def _parse_preset(raw: str) -> str:
    name = raw.strip().lower()
    if name not in PRESETS:
        raise ValueError(f"未知预设 '{raw}'（可选: {', '.join(PRESETS)}）")
    return name


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Method):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(",".join(_format_value(v) for v in point) for point in value)
        return ", ".join(_format_value(v) for v in value)
    if value is None:
        return "1/10L"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


# ============ 配置对象 ============

@dataclass(frozen=True)
class RunConfig:
    """字段缺省值即 sim 预设（5 个点源，M=128，L=M/2，K=5，σ=0.7，SNR 50 dB，60 dB 显示）"""

    preset: str = "sim"
    methods: Tuple[Method, ...] = (Method.DAS, Method.DMAS, Method.EIBMV, Method.EIBMV_DMAS)

    # 模体：等间距轴向点源，或 phantom.points_mm 给出的显式点列
    phantom_count: int = 5
    phantom_start_mm: float = 25.0
    phantom_spacing_mm: float = 5.0
    phantom_x_mm: float = 0.0
    phantom_amplitude: float = 1.0
    phantom_points_mm: Tuple[Tuple[float, float], ...] = ()

    geometry_m: int = 128
    geometry_pitch_mm: float = 0.3
    geometry_fs_mhz: float = 50.0
    geometry_c: float = 1540.0

    pulse_f0_mhz: float = 4.0
    pulse_bandwidth: float = 0.77

    noise_snr_db: float = 50.0
    noise_seed: int = 20180101

    rf_t_samples: int = 2048

    # Δz ≈ c/fs，使 fs_axial = c/Δz ≈ fs
    grid_x_min_mm: float = -10.0
    grid_x_max_mm: float = 10.0
    grid_nx: int = 128
    grid_z_min_mm: float = 20.0
    grid_z_max_mm: float = 50.0
    grid_nz: int = 975

    beamform_l: str = "M/2"
    beamform_k: int = 5
    beamform_delta: Optional[float] = None
    beamform_sigma: float = 0.7
    beamform_signed_sqrt: bool = True

    # auto：通带随 pulse.f0_mhz 等比例缩放（4 MHz 对应 6–15 MHz）
    bandpass_f_lo_mhz: Optional[float] = None
    bandpass_f_hi_mhz: Optional[float] = None
    bandpass_alpha: float = 0.5
    bandpass_apply_to: Tuple[Method, ...] = (Method.DMAS, Method.EIBMV_DMAS)

    display_dynamic_range_db: float = 60.0

    # 为空时取落在网格内的模体点深度
    metrics_depths_mm: Tuple[float, ...] = ()
    roi_size_mm: float = 3.0
    roi_noise_offset_mm: float = 6.0
    # FWHM / PSL 用的细横向剖面：过目标点单独重建一小块；step 为 0 时直接取成像网格的行
    profile_step_mm: float = 0.02
    profile_half_width_mm: float = 2.0
    profile_axial_mm: float = 1.0

    output_dir: Path = config.OUTPUT_DIR / "sim"
    run_threads: int = 1
    run_pixel_block: int = config.PIXEL_BLOCK

    # {Method: {"l": "M/3", "sigma": 0.8, ...}}
    overrides: Mapping[Method, Mapping[str, Any]] = field(default_factory=dict)

    # -------- 构造领域对象 --------
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.linear(
            self.geometry_m,
            pitch=self.geometry_pitch_mm * 1e-3,
            fs=self.geometry_fs_mhz * 1e6,
            c=self.geometry_c,
        )

    def phantom(self) -> Phantom:
        if self.phantom_points_mm:
            points = np.asarray(self.phantom_points_mm) * 1e-3
            return Phantom.from_points(points, amplitude=self.phantom_amplitude)
        return default_phantom(
            count=self.phantom_count,
            start=self.phantom_start_mm * 1e-3,
            spacing=self.phantom_spacing_mm * 1e-3,
            x=self.phantom_x_mm * 1e-3,
            amplitude=self.phantom_amplitude,
        )

    def pulse(self) -> PulseSpec:
        return PulseSpec(f0=self.pulse_f0_mhz * 1e6, fractional_bandwidth=self.pulse_bandwidth)

    def grid(self) -> ImagingGrid:
        return ImagingGrid(
            x_min=self.grid_x_min_mm * 1e-3,
            x_max=self.grid_x_max_mm * 1e-3,
            z_min=self.grid_z_min_mm * 1e-3,
            z_max=self.grid_z_max_mm * 1e-3,
            nx=self.grid_nx,
            nz=self.grid_nz,
        )

    def profile_grid(self, x: float, z: float) -> Optional[ImagingGrid]:
        """
        以目标 (x, z) 为中心的细剖面网格，轴向间距与成像网格相同，中间一行正好在 z 上
        """
        if self.profile_step_mm <= 0:
            return None
        half_cols = int(round(self.profile_half_width_mm / self.profile_step_mm))
        half_x = half_cols * self.profile_step_mm * 1e-3
        dz = self.grid().dz
        half_rows = max(MIN_SCANLINE, int(math.ceil(self.profile_axial_mm * 1e-3 / dz)))
        return ImagingGrid(
            x_min=x - half_x,
            x_max=x + half_x,
            z_min=z - half_rows * dz,
            z_max=z + half_rows * dz,
            nx=2 * half_cols + 1,
            nz=2 * half_rows + 1,
        )

    def fs_axial(self) -> float:
        return axial_sampling_rate(self.grid().dz, self.geometry_c)

    def bandpass(self) -> BandpassSpec:
        scaled = BandpassSpec.scaled(self.pulse_f0_mhz * 1e6)
        return BandpassSpec(
            f_lo=scaled.f_lo if self.bandpass_f_lo_mhz is None else self.bandpass_f_lo_mhz * 1e6,
            f_hi=scaled.f_hi if self.bandpass_f_hi_mhz is None else self.bandpass_f_hi_mhz * 1e6,
            alpha=self.bandpass_alpha,
            apply_to=frozenset(self.bandpass_apply_to),
        )

    def method_param(self, method: Method, name: str) -> Any:
        per_method = self.overrides.get(method, {})
        if name in per_method:
            return per_method[name]
        return getattr(self, f"beamform_{name}")

    def subarray_length(self, method: Method) -> int:
        expr = self.method_param(method, "l")
        match = _APERTURE_RE.match(expr)
        if match:
            return max(1, self.geometry_m // int(match.group(1)))
        return int(expr)

    def beamformer_config(self, method: Method) -> BeamformerConfig:
        method = Method.parse(method)
        cov = None
        if method in ADAPTIVE_METHODS:
            cov = CovConfig(
                L=self.subarray_length(method),
                K=self.method_param(method, "k"),
                delta=self.method_param(method, "delta"),
                sigma=self.method_param(method, "sigma"),
            )
        return BeamformerConfig(
            method=method,
            cov=cov,
            signed_sqrt_inputs=self.method_param(method, "signed_sqrt"),
        )

    def targets(self) -> List[Tuple[float, float]]:
        """
        指标评估的目标点 (x, z)（m）

        显式给出 metrics.depths_mm 时，横向位置取深度最接近的模体点。
        """
        points = self.phantom().positions
        grid = self.grid()
        if not self.metrics_depths_mm:
            inside = (points[:, 1] >= grid.z_min) & (points[:, 1] <= grid.z_max)
            return [(float(x), float(z)) for x, z in points[inside]]

        result = []
        for depth_mm in self.metrics_depths_mm:
            z = depth_mm * 1e-3
            nearest = int(np.argmin(np.abs(points[:, 1] - z)))
            result.append((float(points[nearest, 0]), z))
        return result

    # -------- 校验与回显 --------
    def validate(self) -> "RunConfig":
        """跨字段校验，在任何计算之前完成，出错时指明相关键"""
        try:
            geom = self.geometry()
        except ConfigError as e:
            raise ConfigError(f"geometry.*: {e}") from e
        try:
            grid = self.grid()
        except ConfigError as e:
            raise ConfigError(f"grid.*: {e}") from e
        try:
            self.phantom()
            self.pulse()
        except ConfigError as e:
            raise ConfigError(f"phantom.* / pulse.*: {e}") from e

        if self.rf_t_samples < 1:
            raise ConfigError(f"rf.t_samples: 必须 ≥ 1，当前 {self.rf_t_samples}")
        if self.run_threads < 1:
            raise ConfigError(f"run.threads: 必须 ≥ 1，当前 {self.run_threads}")
        if self.run_pixel_block < 1:
            raise ConfigError(f"run.pixel_block: 必须 ≥ 1，当前 {self.run_pixel_block}")
        if not self.display_dynamic_range_db > 0:
            raise ConfigError(f"display.dynamic_range_db: 必须 > 0，当前 {self.display_dynamic_range_db}")
        if not (self.roi_size_mm > 0 and self.roi_noise_offset_mm > 0):
            raise ConfigError("roi.size_mm / roi.noise_offset_mm: 必须 > 0")
        if self.profile_step_mm < 0:
            raise ConfigError(f"profile.step_mm: 必须 ≥ 0，当前 {self.profile_step_mm}")
        if self.profile_step_mm > 0 and not (
            self.profile_half_width_mm >= self.profile_step_mm and self.profile_axial_mm > 0
        ):
            raise ConfigError("profile.half_width_mm / profile.axial_mm: 半宽须 ≥ step_mm，轴向范围须 > 0")

        for method in self.methods:
            try:
                cfg = self.beamformer_config(method)
                if cfg.cov is not None:
                    cfg.cov.check_aperture(geom.m_elements)
            except ConfigError as e:
                raise ConfigError(f"{method.value}.l / beamform.*: {e}") from e
            if method is Method.EIBMV_DMAS and geom.m_elements < 4:
                raise ConfigError("geometry.m: EIBMV_DMAS 需要 M ≥ 4")

        try:
            spec = self.bandpass()
            if any(m in spec.apply_to for m in self.methods):
                spec.validate(axial_sampling_rate(grid.dz, geom.c))
        except ConfigError as e:
            raise ConfigError(f"bandpass.* / grid.nz: {e}") from e

        for depth_mm in self.metrics_depths_mm:
            if not self.grid_z_min_mm <= depth_mm <= self.grid_z_max_mm:
                raise ConfigError(f"metrics.depths_mm: 深度 {depth_mm} mm 不在网格范围内")
        return self

    def to_flat(self) -> Dict[str, str]:
        """全部键的规范文本形式，可直接写回配置文件"""
        flat: Dict[str, str] = {}
        for key, (attr, _) in KEYS.items():
            value = getattr(self, attr)
            flat[key] = "auto" if value is None and key.startswith("bandpass.") else _format_value(value)
        for method in sorted(self.overrides, key=lambda m: m.value):
            for name, value in sorted(self.overrides[method].items()):
                flat[f"{method.value}.{name}"] = _format_value(value)
        return flat

    def to_dict(self) -> Dict[str, Any]:
        return {
            "preset": self.preset,
            "values": self.to_flat(),
            "beamformers": {m.value: self.beamformer_config(m).to_dict() for m in self.methods},
            "fs_axial_hz": self.fs_axial(),
        }

    def to_text(self) -> str:
        return "".join(f"{key} = {value}\n" for key, value in self.to_flat().items())


KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "preset": ("preset", _parse_preset),
    "methods": ("methods", _parse_methods),
    "phantom.count": ("phantom_count", _parse_int),
    "phantom.start_mm": ("phantom_start_mm", _parse_float),
    "phantom.spacing_mm": ("phantom_spacing_mm", _parse_float),
    "phantom.x_mm": ("phantom_x_mm", _parse_float),
    "phantom.amplitude": ("phantom_amplitude", _parse_float),
    "phantom.points_mm": ("phantom_points_mm", _parse_points),
    "geometry.m": ("geometry_m", _parse_int),
    "geometry.pitch_mm": ("geometry_pitch_mm", _parse_float),
    "geometry.fs_mhz": ("geometry_fs_mhz", _parse_float),
    "geometry.c": ("geometry_c", _parse_float),
    "pulse.f0_mhz": ("pulse_f0_mhz", _parse_float),
    "pulse.bandwidth": ("pulse_bandwidth", _parse_float),
    "noise.snr_db": ("noise_snr_db", _parse_float),
    "noise.seed": ("noise_seed", _parse_int),
    "rf.t_samples": ("rf_t_samples", _parse_int),
    "grid.x_min_mm": ("grid_x_min_mm", _parse_float),
    "grid.x_max_mm": ("grid_x_max_mm", _parse_float),
    "grid.nx": ("grid_nx", _parse_int),
    "grid.z_min_mm": ("grid_z_min_mm", _parse_float),
    "grid.z_max_mm": ("grid_z_max_mm", _parse_float),
    "grid.nz": ("grid_nz", _parse_int),
    "beamform.l": ("beamform_l", _parse_aperture),
    "beamform.k": ("beamform_k", _parse_int),
    "beamform.delta": ("beamform_delta", _parse_delta),
    "beamform.sigma": ("beamform_sigma", _parse_float),
    "beamform.signed_sqrt": ("beamform_signed_sqrt", _parse_bool),
    "bandpass.f_lo_mhz": ("bandpass_f_lo_mhz", _parse_band_edge),
    "bandpass.f_hi_mhz": ("bandpass_f_hi_mhz", _parse_band_edge),
    "bandpass.alpha": ("bandpass_alpha", _parse_float),
    "bandpass.apply_to": ("bandpass_apply_to", _parse_method_set),
    "display.dynamic_range_db": ("display_dynamic_range_db", _parse_float),
    "metrics.depths_mm": ("metrics_depths_mm", _parse_float_list),
    "roi.size_mm": ("roi_size_mm", _parse_float),
    "roi.noise_offset_mm": ("roi_noise_offset_mm", _parse_float),
    "profile.step_mm": ("profile_step_mm", _parse_float),
    "profile.half_width_mm": ("profile_half_width_mm", _parse_float),
    "profile.axial_mm": ("profile_axial_mm", _parse_float),
    "output.dir": ("output_dir", Path),
    "run.threads": ("run_threads", _parse_int),
    "run.pixel_block": ("run_pixel_block", _parse_int),
}

METHOD_KEYS: Dict[str, Callable[[str], Any]] = {
    "l": _parse_aperture,
    "k": _parse_int,
    "delta": _parse_delta,
    "sigma": _parse_float,
    "signed_sqrt": _parse_bool,
}

PRESETS: Dict[str, Dict[str, str]] = {
    "sim": {},
    # 台架实验的合成替代：高频线阵，四个浅层点源，80 dB 显示
    "exp": {
        "phantom.count": "4",
        "phantom.start_mm": "7",
        "phantom.spacing_mm": "2",
        "geometry.fs_mhz": "80",
        "pulse.f0_mhz": "8.5",
        "pulse.bandwidth": "0.95",
        "noise.snr_db": "40",
        "grid.x_min_mm": "-8",
        "grid.x_max_mm": "8",
        "grid.z_min_mm": "5",
        "grid.z_max_mm": "15",
        "grid.nz": "521",
        "beamform.l": "M/3",
        "beamform.k": "0",
        "beamform.sigma": "0.8",
        "display.dynamic_range_db": "80",
        "metrics.depths_mm": "7, 11",
    },
}


# ============ 解析 ============

@dataclass(frozen=True)
class _Assignment:
    key: str
    raw: str
    line: Optional[int]

    @property
    def where(self) -> str:
        return f"第 {self.line} 行" if self.line is not None else "覆盖项"


def _tokenize(text: str, source: str) -> List[_Assignment]:
    assignments: List[_Assignment] = []
    seen: Dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        content = line.split(_COMMENT, 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source} 第 {lineno} 行: 缺少 '='（'{content}'）")
        key, raw = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError(f"{source} 第 {lineno} 行: 键名为空")
        norm = _normalize_key(key)
        if norm in seen:
            raise ConfigError(f"{source} 第 {lineno} 行: 键 '{key}' 重复（首次出现在第 {seen[norm]} 行）")
        seen[norm] = lineno
        assignments.append(_Assignment(key=key, raw=raw, line=lineno))
    return assignments


def _normalize_key(key: str) -> str:
    prefix, dot, name = key.partition(".")
    try:
        return f"{Method.parse(prefix).value}.{name.lower()}" if dot else key
    except ConfigError:
        return key


def _apply(values: Dict[str, Any], item: _Assignment, source: str) -> None:
    if item.key in KEYS:
        attr, parser = KEYS[item.key]
        try:
            values[attr] = parser(item.raw)
        except (ValueError, ConfigError) as e:
            raise ConfigError(f"{source} {item.where}: 键 '{item.key}' 的值 '{item.raw}' 非法: {e}") from None
        return

    prefix, dot, name = item.key.partition(".")
    method = None
    if dot:
        try:
            method = Method.parse(prefix)
        except ConfigError:
            method = None
    if method is None or name.lower() not in METHOD_KEYS:
        raise ConfigError(f"{source} {item.where}: 未知的键 '{item.key}'")

    try:
        parsed = METHOD_KEYS[name.lower()](item.raw)
    except (ValueError, ConfigError) as e:
        raise ConfigError(f"{source} {item.where}: 键 '{item.key}' 的值 '{item.raw}' 非法: {e}") from None
    overrides = {m: dict(v) for m, v in values["overrides"].items()}
    overrides.setdefault(method, {})[name.lower()] = parsed
    values["overrides"] = overrides


def _preset_values(name: str) -> Dict[str, Any]:
    values = {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
    values["overrides"] = {}
    values["output_dir"] = config.OUTPUT_DIR / name
    for key, raw in PRESETS[name].items():
        _apply(values, _Assignment(key=key, raw=raw, line=None), f"预设 {name}")
    values["preset"] = name
    return values


def preset_config(name: str) -> RunConfig:
    try:
        name = _parse_preset(name)
    except ValueError as e:
        raise ConfigError(f"preset: {e}") from None
    return RunConfig(**_preset_values(name))


def parse_run_config(
    text: str,
    preset: Optional[str] = None,
    source: str = "<config>",
    require_methods: bool = True,
) -> RunConfig:
    """
    解析配置文本并叠加到预设上

    文件内的 preset 与参数 preset 同时给出且不一致时报错。
    """
    assignments = _tokenize(text, source)
    by_key = {a.key: a for a in assignments}

    name = preset
    if "preset" in by_key:
        item = by_key["preset"]
        try:
            file_preset = _parse_preset(item.raw)
        except ValueError as e:
            raise ConfigError(f"{source} {item.where}: 键 'preset' 非法: {e}") from None
        if preset is not None and _parse_preset_safe(preset) != file_preset:
            raise ConfigError(
                f"{source} {item.where}: 键 'preset' = {file_preset} 与命令行 --preset {preset} 冲突"
            )
        name = file_preset
    if require_methods and "methods" not in by_key:
        raise ConfigError(f"{source}: 缺少必填键 'methods'")

    values = _preset_values(_parse_preset_safe(name or "sim"))
    for item in assignments:
        if item.key != "preset":
            _apply(values, item, source)
    return RunConfig(**values).validate()


def _parse_preset_safe(name: str) -> str:
    try:
        return _parse_preset(name)
    except ValueError as e:
        raise ConfigError(f"preset: {e}") from None


def load_run_config(path: Path, preset: Optional[str] = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
    return parse_run_config(text, preset=preset, source=str(path))


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any], source: str = "overrides") -> RunConfig:
    """用 {键: 值} 覆盖已有配置（API 与 CLI 的 --threads/--out 使用）"""
    values = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    values["overrides"] = {m: dict(v) for m, v in cfg.overrides.items()}
    for key, raw in overrides.items():
        if key == "preset":
            raise ConfigError(f"{source}: 不能在覆盖项中修改 'preset'")
        if isinstance(raw, list):
            raw = tuple(raw)
        text = raw if isinstance(raw, str) else _format_value(raw)
        _apply(values, _Assignment(key=key, raw=text, line=None), source)
    return RunConfig(**values).validate()


def with_runtime(cfg: RunConfig, output_dir: Optional[Path] = None, threads: Optional[int] = None) -> RunConfig:
    changes: Dict[str, Any] = {}
    if output_dir is not None:
        changes["output_dir"] = Path(output_dir)
    if threads is not None:
        changes["run_threads"] = threads
    return replace(cfg, **changes).validate() if changes else cfg
