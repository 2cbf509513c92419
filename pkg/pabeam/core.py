"""
核心类型与延时计算

阵列几何、RF 帧、成像网格，以及所有波束形成器共用的
飞行时间延时、分数延时线性插值和带符号平方根压缩。
"""

from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np

from .errors import ConfigError

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """线阵几何：阵元位置（m）、间距、采样率（Hz）、声速（m/s）"""

    element_x: np.ndarray
    element_z: np.ndarray
    pitch: float
    fs: float
    c: float

    def __post_init__(self):
        element_x = np.asarray(self.element_x, dtype=np.float64).ravel()
        element_z = np.broadcast_to(
            np.asarray(self.element_z, dtype=np.float64), element_x.shape
        ).copy()
        object.__setattr__(self, "element_x", element_x)
        object.__setattr__(self, "element_z", element_z)

        if element_x.size < 2:
            raise ConfigError(f"阵元数必须 ≥ 2，当前 {element_x.size}")
        if not (np.all(np.isfinite(element_x)) and np.all(np.isfinite(element_z))):
            raise ConfigError("阵元坐标必须为有限值")
        if np.any(np.diff(element_x) <= 0):
            raise ConfigError("阵元 x 坐标必须严格递增")
        if not self.fs > 0:
            raise ConfigError(f"采样率必须 > 0，当前 {self.fs}")
        if not self.c > 0:
            raise ConfigError(f"声速必须 > 0，当前 {self.c}")
        if not self.pitch > 0:
            raise ConfigError(f"阵元间距必须 > 0，当前 {self.pitch}")

    @property
    def m_elements(self) -> int:
        return int(self.element_x.size)

    @classmethod
    def linear(cls, m_elements: int, pitch: float, fs: float, c: float) -> "ArrayGeometry":
        """以 x=0 为中心、位于 z=0 的均匀线阵"""
        if m_elements < 2:
            raise ConfigError(f"阵元数必须 ≥ 2，当前 {m_elements}")
        x = (np.arange(m_elements) - (m_elements - 1) / 2.0) * pitch
        return cls(element_x=x, element_z=np.zeros(m_elements), pitch=pitch, fs=fs, c=c)


@dataclass(frozen=True, eq=False)
class RfFrame:
    """M 通道 × T 采样的实值 RF 数据；t0 为采集起始时刻（s）"""

    samples: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ConfigError(f"RF 数据必须为二维 (M, T)，当前维度 {samples.ndim}")
        if samples.shape[1] < 1:
            raise ConfigError("RF 数据至少需要 1 个时间采样")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("RF 数据包含非有限值")
        if not self.fs > 0:
            raise ConfigError(f"采样率必须 > 0，当前 {self.fs}")
        object.__setattr__(self, "samples", samples)

    @property
    def m_channels(self) -> int:
        return int(self.samples.shape[0])

    @property
    def t_samples(self) -> int:
        return int(self.samples.shape[1])


@dataclass(frozen=True)
class ImagingGrid:
    """横向 × 轴向像素格点（m），端点包含在内"""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    nx: int
    nz: int

    def __post_init__(self):
        if self.nx < 1 or self.nz < 1:
            raise ConfigError(f"像素数必须 ≥ 1，当前 nx={self.nx}, nz={self.nz}")
        if not self.x_min < self.x_max:
            raise ConfigError("x_min 必须小于 x_max")
        if not self.z_min < self.z_max:
            raise ConfigError("z_min 必须小于 z_max")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.nz)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / max(self.nx - 1, 1)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / max(self.nz - 1, 1)

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "nx": self.nx,
            "nz": self.nz,
        }


@dataclass(frozen=True, eq=False)
class DelayedSamples:
    """单个像素对齐后的 M 个通道采样；窗口外的采样为 0 且 valid_mask 为 False"""

    values: np.ndarray
    valid_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        mask = (
            np.ones(values.shape, dtype=bool)
            if self.valid_mask is None
            else np.asarray(self.valid_mask, dtype=bool).ravel()
        )
        if mask.shape != values.shape:
            raise ConfigError("valid_mask 长度必须与 values 一致")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid_mask", mask)

    def __len__(self) -> int:
        return int(self.values.size)


def as_samples(x: Union[DelayedSamples, np.ndarray, list]) -> np.ndarray:
    if isinstance(x, DelayedSamples):
        return x.values
    return np.asarray(x, dtype=np.float64)


def compute_delays(pixel: Tuple[ArrayLike, ArrayLike], geom: ArrayGeometry) -> np.ndarray:
    """
    单程光声飞行时间，单位为采样点

    pixel 可以是标量坐标，也可以是可广播的坐标数组，
    返回形状为 (..., M)。
    """
    x = np.asarray(pixel[0], dtype=np.float64)[..., None]
    z = np.asarray(pixel[1], dtype=np.float64)[..., None]
    distance = np.hypot(x - geom.element_x, z - geom.element_z)
    return distance * (geom.fs / geom.c)


def _interp_channels(samples: np.ndarray, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """positions 的最后一维对应通道；[0, T-1] 之外的位置输出 0"""
    t_samples = samples.shape[1]
    channels = np.arange(samples.shape[0])

    valid = (positions >= 0.0) & (positions <= t_samples - 1)
    safe = np.where(valid, positions, 0.0)
    i0 = np.floor(safe).astype(np.intp)
    i1 = np.minimum(i0 + 1, t_samples - 1)
    frac = safe - i0

    s0 = samples[channels, i0]
    s1 = samples[channels, i1]
    values = np.where(valid, s0 + frac * (s1 - s0), 0.0)
    return values, valid


def extract_delayed(frame: RfFrame, delays: np.ndarray, k: int = 0) -> DelayedSamples:
    """按延时取出各通道采样，k 为额外的整数采样偏移"""
    delays = np.asarray(delays, dtype=np.float64)
    if delays.shape != (frame.m_channels,):
        raise ConfigError(f"延时向量长度 {delays.shape} 与通道数 {frame.m_channels} 不一致")
    positions = delays - frame.t0 * frame.fs + k
    values, valid = _interp_channels(frame.samples, positions)
    return DelayedSamples(values=values, valid_mask=valid)


def delayed_windows(frame: RfFrame, delays: np.ndarray, half_window: int) -> np.ndarray:
    """
    以每个像素的延时为中心取 2K+1 行时间窗

    delays: (..., M)，返回 (..., 2K+1, M)；第 K 行是像素自身的对齐采样。
    """
    delays = np.asarray(delays, dtype=np.float64)
    offsets = np.arange(-half_window, half_window + 1, dtype=np.float64)
    positions = delays[..., None, :] + offsets[:, None] - frame.t0 * frame.fs
    values, _ = _interp_channels(frame.samples, positions)
    return values


def signed_sqrt(x: ArrayLike) -> ArrayLike:
    """sign(x)·√|x|，sign(0)=0"""
    return np.sign(x) * np.sqrt(np.abs(x))
