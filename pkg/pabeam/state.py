import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List


def _jsonable(value: Any) -> Any:
    """inf / nan 不是合法 JSON，写成字符串"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path: Path, data: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, ensure_ascii=False, indent=2, sort_keys=True)


def read_json(path: Path) -> Dict[str, Any]:
    if not path.exists():
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class StateManager:
    """
    运行状态与历史记录（status.json / history.jsonl），供 CLI 与 API 读取；
    以及输出目录中的 manifest.json（全部参数 + 种子 + 版本）。
    """

    MANIFEST_NAME = "manifest.json"

    def __init__(self, state_dir: Path):
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self.status_file = self.state_dir / "status.json"
        self.history_file = self.state_dir / "history.jsonl"

    def save_status(self, data: Dict[str, Any]) -> None:
        write_json(self.status_file, data)

    def load_status(self) -> Dict[str, Any]:
        return read_json(self.status_file)

    def append_history(self, data: Dict[str, Any]) -> None:
        self.state_dir.mkdir(parents=True, exist_ok=True)
        with open(self.history_file, "a", encoding="utf-8") as f:
            f.write(json.dumps(_jsonable(data), ensure_ascii=False) + "\n")

    def load_history(self, limit: int = 20) -> List[Dict[str, Any]]:
        if not self.history_file.exists():
            return []
        with open(self.history_file, "r", encoding="utf-8") as f:
            lines = f.readlines()

        history = []
        for line in lines[-limit:]:
            try:
                history.append(json.loads(line))
            except json.JSONDecodeError:
                continue
        return history[::-1]  # 最新在前

    # -------- 输出目录中的参数回显 --------
    @classmethod
    def save_manifest(cls, out_dir: Path, data: Dict[str, Any]) -> Path:
        path = Path(out_dir) / cls.MANIFEST_NAME
        write_json(path, data)
        return path

    @classmethod
    def load_manifest(cls, out_dir: Path) -> Dict[str, Any]:
        return read_json(Path(out_dir) / cls.MANIFEST_NAME)


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()
