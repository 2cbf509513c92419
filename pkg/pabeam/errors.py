"""异常层次与 CLI 退出码"""

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


class PabeamError(Exception):
    """所有 pabeam 异常的基类"""

    exit_code = EXIT_NUMERICAL


class ConfigError(PabeamError, ValueError):
    """配置、几何参数或输入类型不合法"""

    exit_code = EXIT_CONFIG


class NumericalError(PabeamError, ArithmeticError):
    """数值计算失败（奇异矩阵、特征分解不收敛、尺度未定义等）"""

    exit_code = EXIT_NUMERICAL


class MetricsError(NumericalError):
    """指标无法计算（-6 dB 交点缺失、深度越界、ROI 退化）"""


class RfFormatError(PabeamError, OSError):
    exit_code = EXIT_IO


class RfHeaderError(RfFormatError):
    """魔数错误或文件头不完整"""


class RfVersionError(RfFormatError):
    pass


class RfPayloadError(RfFormatError):
    """数据区长度与文件头不一致"""


class ArtifactError(PabeamError, OSError):
    """metrics 阶段缺少成像结果或网格元数据不一致"""

    exit_code = EXIT_IO


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PabeamError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_CONFIG
    return EXIT_NUMERICAL
