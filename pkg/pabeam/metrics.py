"""
成像质量指标：横向剖面、-6 dB FWHM、ROI 信噪比、峰值旁瓣电平
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.ndimage import uniform_filter1d

from .core import ImagingGrid
from .errors import ConfigError, MetricsError
from .post import DbImage, log_compress

# 半幅值对应的 dB 下降量
HALF_AMPLITUDE = 0.5
# 没有旁瓣时的返回值
NO_SIDELOBE_DB = float("-inf")
MIN_NOISE_PIXELS = 16
MIN_REBOUND_DB = 1.0
# 旁瓣在未截断的剖面上测量；下限只用来避免 log10(0)
UNCLIPPED_RANGE_DB = 400.0


@dataclass(frozen=True)
class Roi:
    """像素坐标矩形，左闭右开：[ix0, ix1) × [iz0, iz1)"""

    ix0: int
    ix1: int
    iz0: int
    iz1: int

    @property
    def size(self) -> int:
        return max(0, self.ix1 - self.ix0) * max(0, self.iz1 - self.iz0)

    def slices(self):
        return slice(self.ix0, self.ix1), slice(self.iz0, self.iz1)

    def overlaps(self, other: "Roi") -> bool:
        return (
            self.ix0 < other.ix1 and other.ix0 < self.ix1
            and self.iz0 < other.iz1 and other.iz0 < self.iz1
        )

    def within(self, shape) -> bool:
        nx, nz = shape
        return 0 <= self.ix0 < self.ix1 <= nx and 0 <= self.iz0 < self.iz1 <= nz


@dataclass(frozen=True)
class RoiPair:
    signal_roi: Roi
    noise_roi: Roi

    def validate(self, shape) -> None:
        if not self.signal_roi.within(shape) or not self.noise_roi.within(shape):
            raise MetricsError(f"ROI 超出图像范围 {tuple(shape)}")
        if self.signal_roi.overlaps(self.noise_roi):
            raise MetricsError("信号 ROI 与噪声 ROI 重叠")


@dataclass(frozen=True, eq=False)
class LateralProfile:
    positions_mm: np.ndarray
    values_db: np.ndarray

    def __post_init__(self):
        positions = np.asarray(self.positions_mm, dtype=np.float64)
        values = np.asarray(self.values_db, dtype=np.float64)
        if positions.shape != values.shape or positions.ndim != 1:
            raise ConfigError("剖面位置与数值必须是等长一维数组")
        if np.any(np.diff(positions) <= 0):
            raise ConfigError("剖面位置必须严格递增")
        object.__setattr__(self, "positions_mm", positions)
        object.__setattr__(self, "values_db", values)


@dataclass
class MetricRow:
    method: str
    depth_mm: float
    fwhm_mm: float
    snr_db: float
    psl_db: float


def lateral_profile(img: DbImage, depth_mm: float, grid: ImagingGrid) -> LateralProfile:
    """取最接近给定深度的一行"""
    z_mm = grid.z * 1e3
    if not z_mm[0] <= depth_mm <= z_mm[-1]:
        raise MetricsError(f"深度 {depth_mm} mm 超出网格 [{z_mm[0]:.3f}, {z_mm[-1]:.3f}] mm")
    row = int(np.argmin(np.abs(z_mm - depth_mm)))
    return LateralProfile(positions_mm=grid.x * 1e3, values_db=img.values[:, row])


def _crossing(x0: float, x1: float, y0: float, y1: float, level: float) -> float:
    if y1 == y0:
        return x0
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def fwhm_minus6db(profile: LateralProfile) -> float:
    """
    峰值两侧最近的半幅值交点之间的宽度（mm）

    在幅值域线性插值，因此对整条剖面加常数 dB 不影响结果。
    """
    x = profile.positions_mm
    amplitude = 10.0 ** ((profile.values_db - np.max(profile.values_db)) / 20.0)
    peak = int(np.argmax(amplitude))
    level = HALF_AMPLITUDE

    left = peak
    while left > 0 and amplitude[left - 1] > level:
        left -= 1
    if left == 0:
        raise MetricsError("主瓣左侧没有 -6 dB 交点（被图像边缘截断）")

    right = peak
    while right < x.size - 1 and amplitude[right + 1] > level:
        right += 1
    if right == x.size - 1:
        raise MetricsError("主瓣右侧没有 -6 dB 交点（被图像边缘截断）")

    x_left = _crossing(x[left - 1], x[left], amplitude[left - 1], amplitude[left], level)
    x_right = _crossing(x[right], x[right + 1], amplitude[right], amplitude[right + 1], level)
    return float(x_right - x_left)


def snr_region(img: np.ndarray, rois: RoiPair) -> float:
    """20·log10((max-min)_signal / std_noise)，在对数压缩前的强度图上计算"""
    img = np.asarray(img, dtype=np.float64)
    rois.validate(img.shape)
    if rois.noise_roi.size < MIN_NOISE_PIXELS:
        raise MetricsError(f"噪声 ROI 至少需要 {MIN_NOISE_PIXELS} 个像素，当前 {rois.noise_roi.size}")

    signal = img[rois.signal_roi.slices()]
    noise = img[rois.noise_roi.slices()]
    p_signal = float(np.max(signal) - np.min(signal))
    p_noise = float(np.std(noise))
    if p_noise == 0.0:
        raise MetricsError("噪声 ROI 标准差为 0，SNR 无定义")
    if p_signal == 0.0:
        return float("-inf")
    return 20.0 * math.log10(p_signal / p_noise)


def _first_minimum(values: np.ndarray, smooth: np.ndarray, peak: int, step: int) -> int:
    """
    峰值一侧第一个原始剖面上的局部极小值

    平滑曲线上看不到、且之后回升不足 MIN_REBOUND_DB 的极小值视为噪声，继续向外找。
    """
    n = values.size

    def inside(i: int) -> bool:
        return 0 <= i < n

    i = peak
    while True:
        while inside(i + step) and values[i + step] <= values[i]:
            i += step
        if not inside(i + step):
            return i

        top = i
        while inside(top + step) and values[top + step] >= values[top]:
            top += step
        if smooth[i + step] > smooth[i] or values[top] - values[i] >= MIN_REBOUND_DB:
            return i
        i = top


def _mainlobe_bounds(values: np.ndarray, peak: int):
    # 在幅值域平滑，深零点不会把相邻旁瓣一起压下去
    amplitude = 10.0 ** ((values - values[peak]) / 20.0)
    smooth = uniform_filter1d(amplitude, size=3, mode="nearest")
    return _first_minimum(values, smooth, peak, -1), _first_minimum(values, smooth, peak, 1)


def peak_sidelobe(profile: LateralProfile) -> float:
    """主瓣（峰值到两侧第一个局部极小值）之外的最高值，相对峰值（dB）"""
    values = profile.values_db
    peak = int(np.argmax(values))
    left, right = _mainlobe_bounds(values, peak)

    outside = np.concatenate([values[:left], values[right + 1:]])
    if outside.size == 0:
        return NO_SIDELOBE_DB
    return float(np.max(outside) - values[peak])


def target_rois(
    grid: ImagingGrid,
    target_x: float,
    target_z: float,
    size: float = 3e-3,
    noise_offset: float = 6e-3,
) -> RoiPair:
    """
    默认 ROI：以目标为中心的 size×size 信号框，
    同深度横向偏移 noise_offset 的同尺寸噪声框
    """
    def box(cx: float, cz: float) -> Roi:
        ix = np.flatnonzero(np.abs(grid.x - cx) <= size / 2 + 1e-12)
        iz = np.flatnonzero(np.abs(grid.z - cz) <= size / 2 + 1e-12)
        if ix.size == 0 or iz.size == 0:
            raise MetricsError(f"ROI 中心 ({cx * 1e3:.2f}, {cz * 1e3:.2f}) mm 不在网格内")
        return Roi(int(ix[0]), int(ix[-1]) + 1, int(iz[0]), int(iz[-1]) + 1)

    noise_x = target_x + noise_offset
    if noise_x + size / 2 > grid.x_max:
        noise_x = target_x - noise_offset
    return RoiPair(signal_roi=box(target_x, target_z), noise_roi=box(noise_x, target_z))


def evaluate_target(
    method: str,
    db_image: DbImage,
    intensity: np.ndarray,
    grid: ImagingGrid,
    target_x: float,
    target_z: float,
    roi_size: float = 3e-3,
    noise_offset: float = 6e-3,
    profile: Optional[LateralProfile] = None,
) -> MetricRow:
    """
    单个目标的 FWHM / SNR / PSL；FWHM 或 SNR 无法计算时记为 NaN

    给出 profile（过目标点的细剖面）时 FWHM 和 PSL 都在它上面算。
    否则 FWHM 取显示用 dB 图的行，PSL 取强度图重新压缩到 UNCLIPPED_RANGE_DB 的行，
    不受显示动态范围截断的影响。
    """
    depth_mm = target_z * 1e3

    def attempt(fn) -> float:
        try:
            return fn()
        except MetricsError:
            return float("nan")

    if profile is None:
        fwhm_profile = lateral_profile(db_image, depth_mm, grid)
        psl_profile = lateral_profile(log_compress(intensity, UNCLIPPED_RANGE_DB), depth_mm, grid)
    else:
        fwhm_profile = psl_profile = profile

    fwhm = attempt(lambda: fwhm_minus6db(fwhm_profile))
    snr = attempt(lambda: snr_region(intensity, target_rois(grid, target_x, target_z, roi_size, noise_offset)))
    psl = peak_sidelobe(psl_profile)
    return MetricRow(method=method, depth_mm=depth_mm, fwhm_mm=fwhm, snr_db=snr, psl_db=psl)


def table_rows(rows: List[MetricRow], methods: List[str]) -> List[dict]:
    """按深度整理成汇总表：深度，然后各方法 SNR，再各方法 FWHM"""
    depths: List[float] = sorted({row.depth_mm for row in rows})
    lookup = {(row.method, row.depth_mm): row for row in rows}
    table = []
    for depth in depths:
        entry: dict = {"depth_mm": depth}
        for method in methods:
            row: Optional[MetricRow] = lookup.get((method, depth))
            entry[f"snr_db_{method}"] = row.snr_db if row else float("nan")
        for method in methods:
            row = lookup.get((method, depth))
            entry[f"fwhm_mm_{method}"] = row.fwhm_mm if row else float("nan")
        table.append(entry)
    return table
