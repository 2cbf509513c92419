import logging
from typing import Dict, List, Literal, Optional, Union

from fastapi import Depends, FastAPI, HTTPException, Request, status
from pydantic import BaseModel, Field

from . import __version__, config
from .errors import ConfigError, PabeamError, exit_code_for
from .log import get_buffer_lines, get_buffer_since, setup_logging, tail_log
from .runconfig import PRESETS, apply_overrides, preset_config, with_runtime
from .runner import PipelineRunner
from .state import StateManager

log_file = setup_logging(config.LOG_DIR, config.LOG_LEVEL, to_file=config.LOG_TO_FILE)
state_manager = StateManager(config.STATE_DIR)
runner = PipelineRunner(state_manager)

app = FastAPI(title="pabeam Beamforming Service", version=__version__)

OverrideValue = Union[bool, int, float, str, List[Union[int, float, str]]]


class RunRequest(BaseModel):
    """一次运行：预设 + RunConfig 键覆盖 + 阶段"""

    preset: str = Field(default_factory=lambda: config.PRESET)
    stage: Literal["synth", "beamform", "metrics", "pipeline"] = "pipeline"
    overrides: Dict[str, OverrideValue] = Field(default_factory=dict)
    threads: Optional[int] = Field(default=None, ge=1, le=config.MAX_API_THREADS)


def require_api_key(request: Request):
    """
    简单鉴权：如果设置了 PABEAM_API_KEY，则需要请求头或查询参数匹配。
    """
    if not config.API_KEY:
        return
    header_key = request.headers.get("x-api-key", "") or request.query_params.get("api_key", "")
    if header_key != config.API_KEY:
        raise HTTPException(
            status_code=status.HTTP_401_UNAUTHORIZED,
            detail="Invalid API key",
        )


@app.get("/api/health")
async def health():
    return {"status": "ok", "running": runner.busy(), "version": __version__}


@app.get("/api/status")
async def get_status():
    status_data = state_manager.load_status()
    status_data["running"] = runner.busy()
    status_data["active_stage"] = runner.active_stage
    return status_data


@app.get("/api/history")
async def get_history(limit: int = 20):
    limit = max(1, min(limit, 200))
    return {"items": state_manager.load_history(limit)}


@app.get("/api/logs")
async def get_logs(tail: int = 200, since: Optional[int] = None, stage: Optional[str] = None):
    """stage 只保留该阶段产生的行（pipeline 内各子阶段分别标记）"""
    if since is not None:
        lines, seq = get_buffer_since(since, stage)
        return {"lines": lines, "seq": seq}
    tail = max(10, min(tail, 2000))
    lines = tail_log(log_file, tail=tail, stage=stage)
    if not lines and stage is None:
        lines = get_buffer_lines(tail)
    return {"lines": lines}


@app.get("/api/presets")
async def get_presets():
    return {name: preset_config(name).to_flat() for name in PRESETS}


@app.post("/api/control/run")
async def run_stage(
    payload: RunRequest,
    _: Optional[str] = Depends(require_api_key),
):
    if runner.busy():
        raise HTTPException(status_code=status.HTTP_409_CONFLICT, detail="a run is already active")

    try:
        cfg = apply_overrides(preset_config(payload.preset), payload.overrides)
        cfg = with_runtime(cfg, threads=payload.threads or config.THREADS)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e)) from e

    try:
        result = await runner.run_async(payload.stage, cfg)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e)) from e
    except (PabeamError, OSError) as e:
        logging.warning(f"API 运行失败: {e}")
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail={"error": str(e), "exit_code": exit_code_for(e)},
        ) from e
    return {"message": "completed", "result": result}
