"""
波束形成器：DAS、DMAS、MDMAS、MV、EIBMV、EIBMV-DMAS

逐像素算子把一个像素的延时数据映射为一个标量；成像驱动按扫描线
分块调用同一套批量核函数，扫描线之间可以并行，结果与线程数无关。
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from .core import (
    ArrayGeometry,
    DelayedSamples,
    ImagingGrid,
    RfFrame,
    as_samples,
    compute_delays,
    delayed_windows,
    signed_sqrt,
)
from .cov import (
    CovConfig,
    diagonal_load,
    eig_sym,
    estimate_covariance,
    subarrays,
    subspace_projector,
)
from .errors import ConfigError, NumericalError


class Method(str, Enum):
    DAS = "DAS"
    DMAS = "DMAS"
    MV = "MV"
    EIBMV = "EIBMV"
    EIBMV_DMAS = "EIBMV_DMAS"

    @classmethod
    def parse(cls, value: Union[str, "Method"]) -> "Method":
        if isinstance(value, Method):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigError(f"未知的波束形成方法 '{value}'（可选: {names}）") from None


ADAPTIVE_METHODS = frozenset({Method.MV, Method.EIBMV, Method.EIBMV_DMAS})
DMAS_FAMILY = frozenset({Method.DMAS, Method.EIBMV_DMAS})


@dataclass(frozen=True)
class BeamformerConfig:
    """
    method: 波束形成方法
    cov: 协方差参数（MV / EIBMV / EIBMV_DMAS 必填）
    signed_sqrt_inputs: DMAS 系列在相乘前对延时采样做带符号平方根压缩
    uniform_weight_debug: 把所有自适应权重强制为 1/M，用于代数化简校验
    """

    method: Method
    cov: Optional[CovConfig] = None
    signed_sqrt_inputs: bool = True
    uniform_weight_debug: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.method in ADAPTIVE_METHODS and self.cov is None:
            raise ConfigError(f"{self.method.value} 需要协方差参数 (L, K, delta, sigma)")

    @property
    def half_window(self) -> int:
        if self.method in ADAPTIVE_METHODS:
            return self.cov.K
        return 0

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "cov": self.cov.to_dict() if self.cov else None,
            "signed_sqrt_inputs": self.signed_sqrt_inputs,
            "uniform_weight_debug": self.uniform_weight_debug,
        }


@dataclass(frozen=True, eq=False)
class PixelWindow:
    """以像素焦点时刻为中心的 (2K+1)×M 延时采样矩阵"""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] % 2 != 1:
            raise ConfigError(f"像素时间窗形状必须为 (2K+1, M)，当前 {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("像素时间窗包含非有限值")
        object.__setattr__(self, "samples", samples)

    @property
    def half_window(self) -> int:
        return self.samples.shape[0] // 2

    @property
    def center(self) -> np.ndarray:
        return self.samples[self.half_window]


WindowLike = Union[PixelWindow, np.ndarray]


@dataclass(eq=False)
class BeamformedImage:
    """逐像素波束形成结果，values 形状为 (nx, nz)"""

    values: np.ndarray
    grid: ImagingGrid
    config: BeamformerConfig
    failures: int = 0
    max_constraint_error: float = float("nan")
    elapsed_sec: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def method(self) -> Method:
        return self.config.method


# ============ 非自适应波束形成 ============

def das(x: Union[DelayedSamples, np.ndarray]) -> float:
    return float(np.sum(as_samples(x)))


def _cross_sum(xh: np.ndarray) -> np.ndarray:
    """Σ_i Σ_{j≠i} x_i x_j = (Σx)² - Σx²，沿最后一维"""
    total = np.sum(xh, axis=-1)
    return total * total - np.sum(xh * xh, axis=-1)


def dmas(x: Union[DelayedSamples, np.ndarray], compress: bool = True) -> float:
    """Σ_{i<j} x̂_i x̂_j，O(M) 恒等式计算"""
    xh = as_samples(x)
    if compress:
        xh = signed_sqrt(xh)
    return float(0.5 * _cross_sum(xh))


def mdmas(x: Union[DelayedSamples, np.ndarray], compress: bool = True) -> float:
    """所有有序交叉项之和，恰为 2·dmas"""
    xh = as_samples(x)
    if compress:
        xh = signed_sqrt(xh)
    return float(_cross_sum(xh))


# ============ MV / EIBMV 权重 ============

def mv_weights(r_loaded: np.ndarray, a: Optional[np.ndarray] = None) -> np.ndarray:
    """w = R⁻¹a / (aᵀR⁻¹a)，a 缺省为全 1 导向矢量；支持批维度"""
    r = np.asarray(r_loaded, dtype=np.float64)
    length = r.shape[-1]
    a = np.ones(length) if a is None else np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise NumericalError("加载后的协方差矩阵包含非有限值")

    rhs = np.broadcast_to(a, r.shape[:-1])[..., None]
    try:
        ria = np.linalg.solve(r, rhs)[..., 0]
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"加载后的协方差矩阵奇异: {e}") from e

    denom = ria @ a
    if not np.all(np.isfinite(denom)) or np.any(denom <= 0):
        raise NumericalError("aᵀR⁻¹a 非正或非有限，MV 权重无定义")
    return ria / denom[..., None]


def eibmv_weights(r_loaded: np.ndarray, w_opt: np.ndarray, sigma: float) -> np.ndarray:
    """W = E_s E_sᵀ w_opt，E_s 取特征值大于 sigma·λ_1 的特征向量"""
    projector = subspace_projector(eig_sym(r_loaded), sigma)
    return (projector @ np.asarray(w_opt, dtype=np.float64)[..., None])[..., 0]


def expand_subarray_weights(w_sub: np.ndarray, m_elements: int) -> np.ndarray:
    """
    子阵权重 -> 全孔径权重

    把长度 L 的权重放到 M-L+1 个子阵位置、重叠相加再除以 M-L+1，
    使 w_Mᵀx = (1/(M-L+1)) Σ_l w_Lᵀ x^l。
    """
    w_sub = np.asarray(w_sub, dtype=np.float64)
    length = w_sub.shape[-1]
    n_sub = m_elements - length + 1
    if n_sub < 1:
        raise ConfigError(f"子阵长度 L={length} 大于阵元数 M={m_elements}")
    full = np.zeros(w_sub.shape[:-1] + (m_elements,))
    for start in range(n_sub):
        full[..., start:start + length] += w_sub
    return full / n_sub


# ============ 批量核函数 ============

def _adaptive_weights(windows: np.ndarray, cov: CovConfig, project: bool) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    windows: (n, 2K+1, M) -> (子阵权重 (n, L), |w_optᵀ1 - 1| (n,), |Wᵀ1 - 1| (n,))

    约束只对投影前的 MV 权重成立；投影后的权重和另外返回，不投影时为 0。

    全零时间窗的协方差为零矩阵，用单位阵代替；这类像素的输出本来就是 0。
    """
    r = diagonal_load(estimate_covariance(windows, cov), cov.delta)
    empty = ~np.any(windows != 0, axis=(-2, -1))
    if np.any(empty):
        r[empty] = np.eye(cov.L)

    w = mv_weights(r)
    constraint = np.abs(np.sum(w, axis=-1) - 1.0)
    if not project:
        return w, constraint, np.zeros_like(constraint)
    w = eibmv_weights(r, w, cov.sigma)
    return w, constraint, np.abs(np.sum(w, axis=-1) - 1.0)


def _subarray_output(w: np.ndarray, center: np.ndarray) -> np.ndarray:
    """(1/(M-L+1)) Σ_l wᵀ x^l"""
    subs = subarrays(center, w.shape[-1])
    return np.sum(subs @ w[..., None], axis=(-2, -1)) / subs.shape[-2]


def _uniform(shape: tuple, m_elements: int) -> np.ndarray:
    return np.full(shape + (m_elements,), 1.0 / m_elements)


def _mv_block(windows: np.ndarray, cfg: BeamformerConfig, project: bool) -> Tuple[np.ndarray, ...]:
    k = windows.shape[-2] // 2
    center = windows[..., k, :]
    if cfg.uniform_weight_debug:
        w_full = _uniform(windows.shape[:-2], windows.shape[-1])
        zeros = np.zeros(windows.shape[:-2])
        return np.sum(w_full * center, axis=-1), zeros, zeros
    w, constraint, drift = _adaptive_weights(windows, cfg.cov, project)
    return _subarray_output(w, center), constraint, drift


def _eibmv_dmas_block(windows: np.ndarray, cfg: BeamformerConfig) -> Tuple[np.ndarray, ...]:
    m_elements = windows.shape[-1]
    k = windows.shape[-2] // 2
    x = signed_sqrt(windows) if cfg.signed_sqrt_inputs else windows
    lead = windows.shape[:-2]

    # 第一级：EIBMV 内层权重，展开为全孔径
    if cfg.uniform_weight_debug:
        w_full = _uniform(lead, m_elements)
        constraint = drift = np.zeros(lead)
    else:
        w_sub, constraint, drift = _adaptive_weights(x, cfg.cov, project=True)
        w_full = expand_subarray_weights(w_sub, m_elements)

    # 第二级：t_i(n) = x_i(n)·Σ_j w_j x_j(n) - w_i x_i(n)²
    inner = np.sum(x * w_full[..., None, :], axis=-1, keepdims=True)
    terms = x * inner - w_full[..., None, :] * x * x

    # 第三级：对各项再做一次 EIBMV（导向矢量全 1）
    if cfg.uniform_weight_debug:
        w_new = _uniform(lead, m_elements)
        return np.sum(w_new * terms[..., k, :], axis=-1), constraint, drift
    w_new, constraint_new, drift_new = _adaptive_weights(terms, cfg.cov, project=True)
    return (
        _subarray_output(w_new, terms[..., k, :]),
        np.maximum(constraint, constraint_new),
        np.maximum(drift, drift_new),
    )


def _block(windows: np.ndarray, cfg: BeamformerConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(n, 2K+1, M) -> (像素值 (n,), 约束误差 (n,), 投影后权重和的偏差 (n,))"""
    method = cfg.method
    k = windows.shape[-2] // 2
    center = windows[..., k, :]
    no_constraint = np.zeros(windows.shape[:-2])

    if method is Method.DAS:
        return np.sum(center, axis=-1), no_constraint, no_constraint
    if method is Method.DMAS:
        xh = signed_sqrt(center) if cfg.signed_sqrt_inputs else center
        return 0.5 * _cross_sum(xh), no_constraint, no_constraint
    if method is Method.MV:
        return _mv_block(windows, cfg, project=False)
    if method is Method.EIBMV:
        return _mv_block(windows, cfg, project=True)
    return _eibmv_dmas_block(windows, cfg)


def _window_array(win: WindowLike) -> np.ndarray:
    if isinstance(win, PixelWindow):
        return win.samples
    return PixelWindow(win).samples


def _single(win: WindowLike, cfg: BeamformerConfig, method: Method) -> float:
    cfg_for = cfg if cfg.method is method else BeamformerConfig(
        method=method,
        cov=cfg.cov,
        signed_sqrt_inputs=cfg.signed_sqrt_inputs,
        uniform_weight_debug=cfg.uniform_weight_debug,
    )
    values = _block(_window_array(win)[None], cfg_for)[0]
    return float(values[0])


# ============ 逐像素算子 ============

def mv_pixel(win: WindowLike, cfg: BeamformerConfig) -> float:
    return _single(win, cfg, Method.MV)


def eibmv_pixel(win: WindowLike, cfg: BeamformerConfig) -> float:
    return _single(win, cfg, Method.EIBMV)


def eibmv_dmas_pixel(win: WindowLike, cfg: BeamformerConfig) -> float:
    samples = _window_array(win)
    if samples.shape[-1] < 4:
        raise ConfigError(f"EIBMV-DMAS 需要 M ≥ 4，当前 M={samples.shape[-1]}")
    return _single(samples, cfg, Method.EIBMV_DMAS)


def pixel_value(win: WindowLike, cfg: BeamformerConfig) -> float:
    """按配置的方法计算单个像素"""
    return _single(win, cfg, cfg.method)


# ============ 成像驱动 ============

def _scanline(
    frame: RfFrame,
    geom: ArrayGeometry,
    x: float,
    zs: np.ndarray,
    cfg: BeamformerConfig,
    pixel_block: int,
) -> Tuple[np.ndarray, int, float, float]:
    """一条扫描线由一个 worker 顺序完成，分块大小固定"""
    values = np.zeros(zs.size)
    failures = 0
    worst = 0.0
    worst_drift = 0.0
    k = cfg.half_window

    for start in range(0, zs.size, pixel_block):
        stop = min(start + pixel_block, zs.size)
        delays = compute_delays((x, zs[start:stop]), geom)
        windows = delayed_windows(frame, delays, k)
        try:
            block, constraint, drift = _block(windows, cfg)
            if not np.all(np.isfinite(block)):
                raise NumericalError("块输出包含非有限值")
        except NumericalError:
            # 整块失败时逐像素重算，把失败隔离到具体像素
            block = np.zeros(stop - start)
            constraint = np.zeros(stop - start)
            drift = np.zeros(stop - start)
            for i in range(stop - start):
                try:
                    value, c, d = _block(windows[i:i + 1], cfg)
                    if not np.isfinite(value[0]):
                        raise NumericalError("像素输出非有限")
                    block[i], constraint[i], drift[i] = value[0], c[0], d[0]
                except NumericalError as e:
                    failures += 1
                    logging.debug(f"像素 (x={x:.5f}, z={zs[start + i]:.5f}) 计算失败: {e}")
        values[start:stop] = block
        if constraint.size:
            worst = max(worst, float(np.max(constraint)))
            worst_drift = max(worst_drift, float(np.max(drift)))

    return values, failures, worst, worst_drift


def beamform_image(
    frame: RfFrame,
    grid: ImagingGrid,
    geom: ArrayGeometry,
    cfg: BeamformerConfig,
    threads: int = 1,
    pixel_block: int = 64,
) -> BeamformedImage:
    if frame.m_channels != geom.m_elements:
        raise ConfigError(f"RF 通道数 {frame.m_channels} 与阵元数 {geom.m_elements} 不一致")
    if cfg.method in ADAPTIVE_METHODS:
        cfg.cov.check_aperture(geom.m_elements)
    if cfg.method is Method.EIBMV_DMAS and geom.m_elements < 4:
        raise ConfigError("EIBMV-DMAS 需要 M ≥ 4")
    if pixel_block < 1:
        raise ConfigError(f"pixel_block 必须 ≥ 1，当前 {pixel_block}")

    start_ts = time.time()
    xs, zs = grid.x, grid.z
    values = np.zeros((grid.nx, grid.nz))

    def run(ix: int):
        return _scanline(frame, geom, float(xs[ix]), zs, cfg, pixel_block)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, range(grid.nx)))

    failures = 0
    worst = 0.0
    worst_drift = 0.0
    for ix, (line, line_failures, line_worst, line_drift) in enumerate(results):
        values[ix] = line
        failures += line_failures
        worst = max(worst, line_worst)
        worst_drift = max(worst_drift, line_drift)

    elapsed = round(time.time() - start_ts, 2)
    extra = {}
    if cfg.method in (Method.EIBMV, Method.EIBMV_DMAS):
        # 投影后的权重和一般不为 1
        extra["max_projected_sum_error"] = worst_drift
    if failures:
        logging.warning(f"{cfg.method.value}: {failures} 个像素数值计算失败，已置 0")
    logging.info(
        f"✓ {cfg.method.value} 成像完成: {grid.nx}×{grid.nz} 像素, 线程={threads}, 耗时={elapsed}s"
    )

    return BeamformedImage(
        values=values,
        grid=grid,
        config=cfg,
        failures=failures,
        max_constraint_error=worst if cfg.method in ADAPTIVE_METHODS else float("nan"),
        elapsed_sec=elapsed,
        extra=extra,
    )
