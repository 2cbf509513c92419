"""
波束形成后处理：Tukey 窗频域带通、解析信号包络、归一化与对数压缩

图像的每一横向列视为一条扫描线，轴向采样率 fs_axial = c / Δz（单程传播）。
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Tuple

import numpy as np
from scipy import fft
from scipy.signal import hilbert
from scipy.signal.windows import tukey

from .beamform import DMAS_FAMILY, Method
from .errors import ConfigError, NumericalError

# 仿真设置下的默认通带（f0 = 4 MHz）
DEFAULT_F0 = 4e6
DEFAULT_BAND = (6e6, 15e6)
DEFAULT_ALPHA = 0.5
MIN_SCANLINE = 8


@dataclass(frozen=True)
class BandpassSpec:
    f_lo: float
    f_hi: float
    alpha: float = DEFAULT_ALPHA
    apply_to: FrozenSet[Method] = field(default=DMAS_FAMILY)

    def __post_init__(self):
        object.__setattr__(self, "apply_to", frozenset(Method.parse(m) for m in self.apply_to))
        if not 0 < self.f_lo < self.f_hi:
            raise ConfigError(f"通带必须满足 0 < f_lo < f_hi，当前 [{self.f_lo}, {self.f_hi}]")
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"Tukey alpha 必须在 [0, 1] 内，当前 {self.alpha}")

    def validate(self, fs: float) -> None:
        if not self.f_hi < fs / 2:
            raise ConfigError(
                f"通带上限 {self.f_hi / 1e6:.3g} MHz 超过奈奎斯特频率 {fs / 2e6:.3g} MHz"
            )

    @classmethod
    def scaled(cls, f0: float, alpha: float = DEFAULT_ALPHA, apply_to: Iterable = DMAS_FAMILY) -> "BandpassSpec":
        """6–15 MHz 通带按 f0/4 MHz 等比例缩放"""
        scale = f0 / DEFAULT_F0
        return cls(DEFAULT_BAND[0] * scale, DEFAULT_BAND[1] * scale, alpha, frozenset(apply_to))

    def to_dict(self) -> dict:
        return {
            "f_lo": self.f_lo,
            "f_hi": self.f_hi,
            "alpha": self.alpha,
            "apply_to": sorted(m.value for m in self.apply_to),
        }


@dataclass(frozen=True, eq=False)
class DbImage:
    """对数压缩后的图像，最大值 0 dB，下限 -dynamic_range"""

    values: np.ndarray
    dynamic_range: float


def _check_length(x: np.ndarray) -> None:
    if x.shape[-1] < MIN_SCANLINE:
        raise ConfigError(f"扫描线长度至少为 {MIN_SCANLINE}，当前 {x.shape[-1]}")


def band_response(freqs: np.ndarray, spec: BandpassSpec) -> np.ndarray:
    """覆盖 [f_lo, f_hi] 的 Tukey 频率窗，通带外为 0"""
    response = np.zeros(freqs.shape)
    inside = np.flatnonzero((freqs >= spec.f_lo) & (freqs <= spec.f_hi))
    if inside.size:
        response[inside] = tukey(inside.size, spec.alpha)
    return response


def bandpass(scanline: np.ndarray, fs: float, spec: BandpassSpec) -> np.ndarray:
    """
    频域乘 Tukey 窗后逆变换

    补零到 2 倍长度，避免循环卷积回绕；支持沿最后一维的批量输入。
    """
    x = np.asarray(scanline, dtype=np.float64)
    _check_length(x)
    spec.validate(fs)

    n = x.shape[-1]
    nfft = 2 * n
    spectrum = fft.rfft(x, n=nfft, axis=-1)
    response = band_response(fft.rfftfreq(nfft, d=1.0 / fs), spec)
    return fft.irfft(spectrum * response, n=nfft, axis=-1)[..., :n]


def envelope(scanline: np.ndarray) -> np.ndarray:
    """解析信号的模（负频率置零、正频率加倍）"""
    x = np.asarray(scanline, dtype=np.float64)
    _check_length(x)
    return np.abs(hilbert(x, axis=-1))


def log_compress(image: np.ndarray, dynamic_range: float) -> DbImage:
    """20·log10(|v|/max)，低于 -dynamic_range 的值（包括 0）截断"""
    if not dynamic_range > 0:
        raise ConfigError(f"动态范围必须 > 0，当前 {dynamic_range}")
    magnitude = np.abs(np.asarray(image, dtype=np.float64))
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if not peak > 0:
        raise NumericalError("图像全为零，无法归一化")

    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(magnitude / peak)
    return DbImage(values=np.clip(db, -dynamic_range, 0.0), dynamic_range=dynamic_range)


def axial_sampling_rate(dz: float, c: float) -> float:
    return c / dz


def process_image(
    values: np.ndarray,
    method: Method,
    fs_axial: float,
    spec: BandpassSpec,
    dynamic_range: float,
) -> Tuple[np.ndarray, DbImage]:
    """
    完整后处理链，返回（对数压缩前的包络强度图, dB 图）

    仅对 spec.apply_to 中的方法做带通。
    """
    lines = np.asarray(values, dtype=np.float64)
    if Method.parse(method) in spec.apply_to:
        lines = bandpass(lines, fs_axial, spec)
    env = envelope(lines)
    return env, log_compress(env, dynamic_range)
