"""
序列化：PARF 二进制 RF 文件、16 位 PGM 图像、CSV 剖面与指标

PARF 文件头（小端）: magic "PARF" | version u32 | M u32 | T u32 | fs f64 | c f64 | pitch f64，
随后是 M·T 个小端 float32，按通道优先顺序排列。
"""

import csv
import math
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .core import ArrayGeometry, RfFrame
from .errors import RfFormatError, RfHeaderError, RfPayloadError, RfVersionError
from .metrics import LateralProfile, MetricRow
from .post import DbImage

PathLike = Union[str, Path]

RF_MAGIC = b"PARF"
RF_VERSION = 1
RF_HEADER = struct.Struct("<4sIIIddd")
RF_SAMPLE = np.dtype("<f4")

PGM_MAXVAL = 65535

PROFILE_COLUMNS = ("lateral_mm", "value_db")
METRIC_COLUMNS = ("method", "depth_mm", "fwhm_mm", "snr_db", "psl_db")


def format_number(value: float) -> str:
    """至少 9 位有效数字；保留 inf / nan 的可解析写法"""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


# ============ RF 二进制 ============

def write_rf(frame: RfFrame, geom: ArrayGeometry, path: PathLike) -> Path:
    if frame.t0 != 0.0:
        raise RfFormatError("PARF 格式不记录 t0，仅支持 t0 = 0 的 RF 帧")
    if frame.m_channels != geom.m_elements:
        raise RfFormatError(f"通道数 {frame.m_channels} 与阵元数 {geom.m_elements} 不一致")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = RF_HEADER.pack(
        RF_MAGIC, RF_VERSION, frame.m_channels, frame.t_samples, frame.fs, geom.c, geom.pitch
    )
    payload = np.ascontiguousarray(frame.samples, dtype=RF_SAMPLE).tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
    return path


def read_rf(path: PathLike) -> Tuple[RfFrame, ArrayGeometry]:
    data = Path(path).read_bytes()
    if len(data) < RF_HEADER.size:
        raise RfHeaderError(f"文件头不完整: {len(data)} < {RF_HEADER.size} 字节")

    magic, version, m_channels, t_samples, fs, c, pitch = RF_HEADER.unpack_from(data)
    if magic != RF_MAGIC:
        raise RfHeaderError(f"魔数错误: {magic!r}")
    if version != RF_VERSION:
        raise RfVersionError(f"不支持的版本 {version}（期望 {RF_VERSION}）")

    expected = m_channels * t_samples * RF_SAMPLE.itemsize
    payload = data[RF_HEADER.size:]
    if len(payload) != expected:
        raise RfPayloadError(f"数据区长度 {len(payload)} 字节，期望 {expected} 字节")

    samples = np.frombuffer(payload, dtype=RF_SAMPLE).reshape(m_channels, t_samples)
    geom = ArrayGeometry.linear(m_channels, pitch=pitch, fs=fs, c=c)
    return RfFrame(samples=samples.astype(np.float64), fs=fs, t0=0.0), geom


# ============ 图像 ============

def db_to_gray(values: np.ndarray, dynamic_range: float) -> np.ndarray:
    gray = np.rint(PGM_MAXVAL * (np.asarray(values) + dynamic_range) / dynamic_range)
    return np.clip(gray, 0, PGM_MAXVAL).astype(np.uint16)


def write_pgm(img: DbImage, path: PathLike) -> Path:
    """16 位二进制 PGM，宽 = 横向像素，高 = 轴向像素（深度向下）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    gray = db_to_gray(img.values, img.dynamic_range).T
    height, width = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii"))
        f.write(gray.astype(">u2").tobytes())
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """读取 write_pgm 写出的文件，返回 (高, 宽) 的灰度矩阵"""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise RfFormatError(f"不是 16 位二进制 PGM: {path}")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(height, width).astype(np.uint16)


# ============ CSV ============

def _write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return path


def write_csv_profile(profile: LateralProfile, path: PathLike) -> Path:
    return _write_csv(path, PROFILE_COLUMNS, zip(profile.positions_mm, profile.values_db))


def read_csv_profile(path: PathLike) -> LateralProfile:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return LateralProfile(
        positions_mm=np.array([float(r["lateral_mm"]) for r in rows]),
        values_db=np.array([float(r["value_db"]) for r in rows]),
    )


def write_csv_metrics(rows: Iterable[MetricRow], path: PathLike) -> Path:
    return _write_csv(
        path,
        METRIC_COLUMNS,
        ([r.method, r.depth_mm, r.fwhm_mm, r.snr_db, r.psl_db] for r in rows),
    )


def read_csv_metrics(path: PathLike) -> List[MetricRow]:
    with open(path, newline="", encoding="utf-8") as f:
        return [
            MetricRow(
                method=r["method"],
                depth_mm=float(r["depth_mm"]),
                fwhm_mm=float(r["fwhm_mm"]),
                snr_db=float(r["snr_db"]),
                psl_db=float(r["psl_db"]),
            )
            for r in csv.DictReader(f)
        ]


def write_csv_table(table: List[Dict[str, float]], columns: Sequence[str], path: PathLike) -> Path:
    return _write_csv(path, columns, ([entry[c] for c in columns] for entry in table))


# ============ 数组 ============

def write_npy(values: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.asarray(values, dtype=np.float64), allow_pickle=False)
    return path


def read_npy(path: PathLike) -> np.ndarray:
    return np.load(Path(path), allow_pickle=False)
