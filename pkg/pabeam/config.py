"""进程级配置（支持环境变量覆盖，适合服务器部署）"""

import os
from pathlib import Path


def _as_bool(value: str, default: bool) -> bool:
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _as_int(value: str, default: int) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


# 输出与日志
OUTPUT_DIR = Path(os.getenv("PABEAM_OUTPUT_DIR", "./output"))
LOG_DIR = Path(os.getenv("PABEAM_LOG_DIR", OUTPUT_DIR / "logs"))
LOG_LEVEL = os.getenv("PABEAM_LOG_LEVEL", "INFO")
# 是否写轮转日志文件（关闭时只输出到控制台和内存缓冲）
LOG_TO_FILE = _as_bool(os.getenv("PABEAM_LOG_TO_FILE"), True)

# 运行状态（status.json / history.jsonl）
STATE_DIR = Path(os.getenv("PABEAM_STATE_DIR", "./state"))

# 成像并行度：线程数不影响结果，只影响耗时
THREADS = max(1, _as_int(os.getenv("PABEAM_THREADS"), 1))
# 沿扫描线每次批量计算的像素数；结果只依赖这个值，不依赖线程数
PIXEL_BLOCK = max(1, _as_int(os.getenv("PABEAM_PIXEL_BLOCK"), 64))

# 缺省预设（sim / exp）
PRESET = os.getenv("PABEAM_PRESET", "sim")

# HTTP 服务
API_KEY = os.getenv("PABEAM_API_KEY", "").strip()
HOST = os.getenv("PABEAM_HOST", "0.0.0.0")
PORT = _as_int(os.getenv("PABEAM_PORT"), 8000)
# 单次 run 请求允许的最大线程数
MAX_API_THREADS = _as_int(os.getenv("PABEAM_MAX_API_THREADS"), 8)
# 日志内存缓冲（供 /api/logs 使用）
LOG_BUFFER_LINES = _as_int(os.getenv("PABEAM_LOG_BUFFER_LINES"), 2000)
