"""
协方差估计与特征子空间

空间平滑（长度 L 的滑动子阵）+ 时间平均（2K+1 行）的样本协方差、
对角加载、对称特征分解和信号子空间选择，MV 与 EIBMV 共用。
所有函数都接受带前导批维度的输入，单个像素是批大小为 1 的特例。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class CovConfig:
    """
    L: 子阵长度；K: 时间半窗；delta: 对角加载系数（相对迹）；sigma: 特征值阈值比例

    delta 缺省时取 1/(10L)。
    """

    L: int
    K: int = 0
    delta: Optional[float] = None
    sigma: float = 0.0

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError(f"子阵长度 L 必须 ≥ 1，当前 {self.L}")
        if self.K < 0:
            raise ConfigError(f"时间半窗 K 必须 ≥ 0，当前 {self.K}")
        if self.delta is None:
            object.__setattr__(self, "delta", 1.0 / (10.0 * self.L))
        if not self.delta >= 0:
            raise ConfigError(f"对角加载系数必须 ≥ 0，当前 {self.delta}")
        if not 0 <= self.sigma < 1:
            raise ConfigError(f"sigma 必须在 [0, 1) 内，当前 {self.sigma}")

    @property
    def window_rows(self) -> int:
        return 2 * self.K + 1

    def check_aperture(self, m_elements: int) -> None:
        """成像时要求 1 ≤ L ≤ M/2"""
        if 2 * self.L > m_elements:
            raise ConfigError(f"子阵长度 L={self.L} 超过 M/2（M={m_elements}）")

    def to_dict(self) -> dict:
        return {"L": self.L, "K": self.K, "delta": self.delta, "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class EigPair:
    """特征值降序排列，特征向量按列对应"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def subarrays(x: np.ndarray, length: int) -> np.ndarray:
    """(..., M) -> (..., M-L+1, L) 的滑动子阵视图"""
    return sliding_window_view(x, length, axis=-1)


def estimate_covariance(window: np.ndarray, cfg: CovConfig) -> np.ndarray:
    """
    R = 1/((2K+1)(M-L+1)) Σ_n Σ_l x_l(n) x_l(n)^T

    window: (..., 2K+1, M)，窗外的行已经是 0，归一化因子保持不变。
    """
    window = np.asarray(window, dtype=np.float64)
    rows, m_elements = window.shape[-2:]
    if cfg.L > m_elements:
        raise ConfigError(f"子阵长度 L={cfg.L} 大于阵元数 M={m_elements}")
    if rows != cfg.window_rows:
        raise ConfigError(f"时间窗行数 {rows} 与 2K+1={cfg.window_rows} 不一致")

    n_sub = m_elements - cfg.L + 1
    snapshots = subarrays(window, cfg.L).reshape(*window.shape[:-2], rows * n_sub, cfg.L)
    r = np.swapaxes(snapshots, -1, -2) @ snapshots
    r /= rows * n_sub
    return 0.5 * (r + np.swapaxes(r, -1, -2))


def diagonal_load(r: np.ndarray, delta: float) -> np.ndarray:
    """R + delta·trace(R)·I"""
    r = np.asarray(r, dtype=np.float64)
    if delta == 0:
        return r.copy()
    trace = np.trace(r, axis1=-2, axis2=-1)[..., None, None]
    return r + delta * trace * np.eye(r.shape[-1])


def eig_sym(r: np.ndarray) -> EigPair:
    """
    对称矩阵特征分解，特征值降序

    每个特征向量中绝对值最大的分量取正，保证结果可复现。
    """
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise NumericalError("协方差矩阵包含非有限值")
    try:
        values, vectors = np.linalg.eigh(r)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"特征分解不收敛: {e}") from e

    values = values[..., ::-1]
    vectors = vectors[..., :, ::-1]

    pivot = np.argmax(np.abs(vectors), axis=-2)[..., None, :]
    signs = np.sign(np.take_along_axis(vectors, pivot, axis=-2))
    signs[signs == 0] = 1.0
    return EigPair(eigenvalues=values.copy(), eigenvectors=vectors * signs)


def subspace_mask(eigenvalues: np.ndarray, sigma: float) -> np.ndarray:
    """λ_i > sigma·λ_1 的特征值，始终至少保留 u_1"""
    eigenvalues = np.asarray(eigenvalues)
    mask = eigenvalues > sigma * eigenvalues[..., :1]
    mask[..., 0] = True
    return mask


def signal_subspace(eig: EigPair, sigma: float) -> np.ndarray:
    """E_s = [u_1 … u_Num]（单个矩阵）"""
    num = int(np.count_nonzero(subspace_mask(eig.eigenvalues, sigma)))
    return eig.eigenvectors[:, :num]


def subspace_projector(eig: EigPair, sigma: float) -> np.ndarray:
    """P = E_s E_s^T，支持批维度"""
    mask = subspace_mask(eig.eigenvalues, sigma)
    kept = eig.eigenvectors * mask[..., None, :]
    return kept @ np.swapaxes(eig.eigenvectors, -1, -2)
