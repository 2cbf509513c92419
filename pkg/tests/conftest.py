import os
import tempfile

# 测试进程不写轮转日志，状态文件放到临时目录（须在导入 pabeam.config 之前设置）
os.environ.setdefault("PABEAM_LOG_TO_FILE", "false")
os.environ.setdefault("PABEAM_STATE_DIR", tempfile.mkdtemp(prefix="pabeam-state-"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from pabeam.core import ArrayGeometry  # noqa: E402
from pabeam.synth import Phantom, PulseSpec, simulate_rf  # noqa: E402


def pytest_addoption(parser):
    parser.addoption(
        "--runslow",
        action="store_true",
        default=False,
        help="run full-scale reconstructions marked slow",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20180101)


@pytest.fixture
def small_geometry():
    return ArrayGeometry.linear(16, pitch=0.3e-3, fs=50e6, c=1540.0)


@pytest.fixture
def pulse():
    return PulseSpec(f0=4e6, fractional_bandwidth=0.77)


@pytest.fixture
def point_frame(small_geometry, pulse):
    """单个点源 (0, 10 mm)，无噪声"""
    phantom = Phantom.from_points([(0.0, 10e-3)])
    return simulate_rf(phantom, small_geometry, pulse, t_samples=512)


SMALL_CONFIG = """\
# 16 阵元、单点源的小规模配置
methods = DAS, DMAS, EIBMV, EIBMV_DMAS
phantom.count = 1
phantom.start_mm = 10
geometry.m = 16
rf.t_samples = 512
grid.x_min_mm = -3
grid.x_max_mm = 3
grid.nx = 17
grid.z_min_mm = 8
grid.z_max_mm = 12
grid.nz = 131
beamform.k = 1
roi.size_mm = 1
roi.noise_offset_mm = 2
"""


@pytest.fixture
def small_config_text():
    return SMALL_CONFIG


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path
