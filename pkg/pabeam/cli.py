"""
命令行入口

    pabeam synth     [--config FILE] [--preset sim|exp] [--out DIR]
    pabeam beamform  [--rf FILE] ...
    pabeam metrics   [--images DIR] ...
    pabeam pipeline  ...

退出码：0 成功，1 配置错误，2 数值失败，3 I/O 失败。
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__, config
from .errors import EXIT_CONFIG, EXIT_OK, ConfigError, exit_code_for
from .log import setup_logging
from .runconfig import RunConfig, load_run_config, preset_config, with_runtime
from .runner import PipelineRunner, failure_counts
from .state import StateManager


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="RunConfig file (key = value lines); must list 'methods'",
    )
    parser.add_argument(
        "--preset",
        choices=("sim", "exp"),
        default=None,
        help=f"Base preset the config is layered on (default: {config.PRESET})",
    )
    parser.add_argument(
        "--out",
        type=Path,
        default=None,
        help="Output directory (default: output.dir of the config)",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker threads across scanlines; never changes the output",
    )
    parser.add_argument(
        "--state-dir",
        type=Path,
        default=config.STATE_DIR,
        help=f"Directory for status.json / history.jsonl (default: {config.STATE_DIR})",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Enable debug logging",
    )


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="pabeam",
        description="Linear-array photoacoustic beamforming: DAS, DMAS, MV, EIBMV and EIBMV-DMAS.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Simulate the point-absorber phantom and write a PARF RF file")
    _add_common(synth)

    beamform = sub.add_parser("beamform", help="Reconstruct images for every configured method")
    _add_common(beamform)
    beamform.add_argument(
        "--rf",
        type=Path,
        default=None,
        help="PARF RF file (default: <out>/rf.parf)",
    )

    metrics = sub.add_parser("metrics", help="Compute FWHM / SNR / PSL from beamformed images")
    _add_common(metrics)
    metrics.add_argument(
        "--images",
        type=Path,
        default=None,
        help="Directory holding the beamformed artifacts (default: <out>)",
    )

    pipeline = sub.add_parser("pipeline", help="synth, beamform and metrics in sequence")
    _add_common(pipeline)

    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    return args


def load_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        cfg = load_run_config(args.config, preset=args.preset)
    else:
        cfg = preset_config(args.preset or config.PRESET).validate()
    return with_runtime(cfg, output_dir=args.out, threads=args.threads)


def _stage_path(args: argparse.Namespace) -> Optional[Path]:
    if args.command == "beamform":
        return args.rf
    if args.command == "metrics":
        return args.images
    return None


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)

    # 配置错误在任何计算之前返回
    try:
        cfg = load_config(args)
    except ConfigError as e:
        setup_logging(None, "DEBUG" if args.verbose else config.LOG_LEVEL)
        logging.error(f"配置错误: {e}")
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    log_level = "DEBUG" if args.verbose else config.LOG_LEVEL
    setup_logging(Path(cfg.output_dir) / "logs", log_level, to_file=config.LOG_TO_FILE)

    runner = PipelineRunner(StateManager(args.state_dir))
    try:
        result = runner.run(args.command, cfg, _stage_path(args))
    except Exception as e:  # 已由 runner 记录日志和状态
        print(f"{args.command} failed: {e}", file=sys.stderr)
        return exit_code_for(e)

    for method, count in failure_counts(result).items():
        print(f"{method}: {count} pixel failures", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
