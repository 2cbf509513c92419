"""
解析点源光声正演模型与白噪声注入

通道 i 的信号为各吸收体贡献之和 (A/r)·g(t - r/c)，
g 为 -6 dB 分数带宽给定的高斯调制正弦脉冲。
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.signal import gausspulse

from .core import ArrayGeometry, RfFrame
from .errors import ConfigError, NumericalError

# 吸收体与阵元重合的判定阈值（m）
MIN_DISTANCE = 1e-12
# 脉冲截断电平；更远的尾部置 0，不产生次正规数
PULSE_CUTOFF_DB = -120.0


@dataclass(frozen=True, eq=False)
class Phantom:
    """点吸收体集合：positions 为 (N, 2) 的 (x, z) 坐标（m），amplitudes 为正幅度"""

    positions: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        amplitudes = np.asarray(self.amplitudes, dtype=np.float64).ravel()
        if positions.shape[0] != amplitudes.size:
            raise ConfigError("吸收体位置数与幅度数不一致")
        if not np.all(np.isfinite(positions)):
            raise ConfigError("吸收体位置必须为有限值")
        if np.any(amplitudes <= 0) or not np.all(np.isfinite(amplitudes)):
            raise ConfigError("吸收体幅度必须 > 0")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def count(self) -> int:
        return int(self.amplitudes.size)

    @classmethod
    def from_points(cls, points: Sequence[Tuple[float, float]], amplitude: float = 1.0) -> "Phantom":
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(positions=points, amplitudes=np.full(points.shape[0], amplitude))


@dataclass(frozen=True)
class PulseSpec:
    f0: float
    fractional_bandwidth: float

    def __post_init__(self):
        if not self.f0 > 0:
            raise ConfigError(f"中心频率必须 > 0，当前 {self.f0}")
        if not 0 < self.fractional_bandwidth < 2:
            raise ConfigError(f"分数带宽必须在 (0, 2) 内，当前 {self.fractional_bandwidth}")

    @property
    def cutoff(self) -> float:
        """包络降到 PULSE_CUTOFF_DB 以下的时刻（s）"""
        return float(gausspulse("cutoff", fc=self.f0, bw=self.fractional_bandwidth, bwr=-6, tpr=PULSE_CUTOFF_DB))

    def waveform(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        pulse = gausspulse(t, fc=self.f0, bw=self.fractional_bandwidth, bwr=-6)
        return np.where(np.abs(t) <= self.cutoff, pulse, 0.0)


def default_phantom(
    count: int = 5,
    start: float = 25e-3,
    spacing: float = 5e-3,
    x: float = 0.0,
    amplitude: float = 1.0,
) -> Phantom:
    """沿轴线等间距排列的等幅吸收体，默认 25–45 mm 共 5 个"""
    if count < 1:
        raise ConfigError(f"吸收体数量必须 ≥ 1，当前 {count}")
    depths = start + spacing * np.arange(count)
    return Phantom.from_points([(x, z) for z in depths], amplitude=amplitude)


def simulate_rf(
    phantom: Phantom,
    geom: ArrayGeometry,
    pulse: PulseSpec,
    t_samples: int,
    t0: float = 0.0,
) -> RfFrame:
    if t_samples < 1:
        raise ConfigError(f"采样点数必须 ≥ 1，当前 {t_samples}")

    t = t0 + np.arange(t_samples) / geom.fs
    samples = np.zeros((geom.m_elements, t_samples))

    for (px, pz), amplitude in zip(phantom.positions, phantom.amplitudes):
        r = np.hypot(geom.element_x - px, geom.element_z - pz)
        if np.any(r < MIN_DISTANCE):
            raise ConfigError(f"吸收体 ({px:.4g}, {pz:.4g}) 与阵元重合，模型无定义")
        samples += (amplitude / r)[:, None] * pulse.waveform(t[None, :] - (r / geom.c)[:, None])

    logging.debug(f"正演完成: {phantom.count} 个吸收体, {geom.m_elements}×{t_samples}")
    return RfFrame(samples=samples, fs=geom.fs, t0=t0)


def add_noise(frame: RfFrame, snr_db: float, seed: int) -> RfFrame:
    """
    加零均值高斯白噪声，std = rms(整帧)/10^(snr_db/20)

    snr_db = +inf 表示不加噪声，原样返回。
    """
    if math.isinf(snr_db) and snr_db > 0:
        return frame
    if math.isnan(snr_db):
        raise ConfigError("snr_db 不能为 NaN")

    rms = float(np.sqrt(np.mean(frame.samples ** 2)))
    if rms == 0.0:
        raise NumericalError("RF 帧全为零，信噪比无定义")

    std = rms / 10 ** (snr_db / 20)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, std, size=frame.samples.shape)
    return RfFrame(samples=frame.samples + noise, fs=frame.fs, t0=frame.t0)
