import logging
from collections import deque
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Deque, Iterator, List, NamedTuple, Optional, Tuple

from . import config

SEPARATOR = "=" * 60

_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
_DATEFMT = "%Y-%m-%d %H:%M:%S"

# 当前阶段；同一时间只有一个运行（见 PipelineRunner）
_active_stage: Optional[str] = None


class BufferedLine(NamedTuple):
    seq: int
    stage: Optional[str]
    text: str


@contextmanager
def stage_scope(stage: str) -> Iterator[None]:
    """范围内写入内存缓冲的日志行都带上 stage 标签，可嵌套"""
    global _active_stage
    previous = _active_stage
    _active_stage = stage
    try:
        yield
    finally:
        _active_stage = previous


class _StageBuffer(logging.Handler):
    """按序号保存最近的日志行，每行记下产生它的阶段"""

    def __init__(self, capacity: int = 1000):
        super().__init__()
        self.lines: Deque[BufferedLine] = deque(maxlen=capacity)
        self._seq = 0

    def emit(self, record: logging.LogRecord) -> None:
        self._seq += 1
        self.lines.append(BufferedLine(self._seq, _active_stage, self.format(record) + "\n"))

    def _select(self, stage: Optional[str]) -> List[BufferedLine]:
        return [line for line in list(self.lines) if stage is None or line.stage == stage]

    def tail(self, count: int, stage: Optional[str] = None) -> List[str]:
        if count <= 0:
            return []
        return [line.text for line in self._select(stage)[-count:]]

    def since(self, last_seq: int, stage: Optional[str] = None) -> Tuple[List[str], int]:
        """last_seq 之后的行；返回的序号是缓冲中最新的一行，过滤掉的行也算"""
        selected = self._select(None)
        latest = selected[-1].seq if selected else last_seq
        lines = [line.text for line in selected if line.seq > last_seq and (stage is None or line.stage == stage)]
        return lines, max(latest, last_seq)


_memory_handler: Optional[_StageBuffer] = None


def setup_logging(
    log_dir: Optional[Path] = None,
    log_level: str = "INFO",
    to_file: bool = True,
) -> Optional[Path]:
    """
    初始化根日志：控制台（stderr）+ 轮转文件 + 内存缓冲。

    重复调用只会更新级别，不会重复添加 handler；
    log_dir 为 None 或 to_file=False 时不写文件，返回 None。
    """
    formatter = logging.Formatter(fmt=_FORMAT, datefmt=_DATEFMT)

    global _memory_handler
    if _memory_handler is None:
        _memory_handler = _StageBuffer(capacity=config.LOG_BUFFER_LINES)
        _memory_handler.setFormatter(formatter)

    root = logging.getLogger()
    root.setLevel(getattr(logging, log_level.upper(), logging.INFO))

    # 避免重复添加相同类型的 handler
    handler_types = {type(h) for h in root.handlers}
    if logging.StreamHandler not in handler_types:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)
    if _StageBuffer not in handler_types:
        root.addHandler(_memory_handler)

    if log_dir is None or not to_file:
        return None

    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / "run.log"
    if RotatingFileHandler not in handler_types:
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=5 * 1024 * 1024,  # 5MB
            backupCount=3,
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)
    return log_file


def tail_log(log_file: Optional[Path], tail: int = 200, stage: Optional[str] = None) -> List[str]:
    """
    日志尾部若干行。

    指定 stage 时只能从内存缓冲取（文件里没有阶段标签）；
    文件不存在时同样退回内存缓冲。
    """
    if stage is not None or log_file is None or not log_file.exists():
        return get_buffer_lines(tail, stage)

    with open(log_file, "r", encoding="utf-8") as f:
        lines = f.readlines()
    return lines[-tail:]


def get_buffer_lines(tail: int = 200, stage: Optional[str] = None) -> List[str]:
    if _memory_handler is None:
        return []
    return _memory_handler.tail(tail, stage)


def get_buffer_since(last_seq: int, stage: Optional[str] = None) -> Tuple[List[str], int]:
    if _memory_handler is None:
        return [], last_seq
    return _memory_handler.since(last_seq, stage)
