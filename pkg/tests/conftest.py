"""
pytest 配置和共享 fixtures

提供测试所需的小规模任务、网格、配置与临时目录。
"""

import json
import sys
from pathlib import Path

import pytest

# 将 edit_sim 添加到路径
sys.path.insert(0, str(Path(__file__).parent.parent))

from edit_sim.config import ExperimentConfig
from edit_sim.hooks import HookRegistry
from edit_sim.mesh import DeviceMesh
from edit_sim.tasks import MlpTask, QuadraticTask


# ============ 任务相关 fixtures ============


@pytest.fixture
def quad_task() -> QuadraticTask:
    """8 维、两层的二次型"""
    return QuadraticTask(n=8, cond=10.0, seed=0, num_layers=2, noise_std=0.1, noise_clip=0.5)


@pytest.fixture
def mlp_task() -> MlpTask:
    """3-5-2 的小网络"""
    return MlpTask([3, 5, 2], seed=0, val_size=32)


# ============ 网格相关 fixtures ============


@pytest.fixture
def mesh_2x2() -> DeviceMesh:
    return DeviceMesh(2, 2)


# ============ 配置相关 fixtures ============


@pytest.fixture
def small_config_dict(tmp_path: Path) -> dict:
    """小规模实验配置字典"""
    return {
        "name": "small",
        "task": {"kind": "quadratic", "n": 8, "cond": 10.0, "num_layers": 2, "noise_std": 0.1, "noise_clip": 0.5},
        "mesh": {"M": 2, "N": 2},
        "protocol": {"name": "edit", "sync": {"tau": 4, "t_warm": 0}},
        "inner": {"kind": "sgd", "lr": 0.05},
        "outer": {"kind": "nesterov", "lr": 0.8, "momentum": 0.85},
        "schedule": {"kind": "constant"},
        "rounds": 6,
        "batch_size": 4,
        "seeds": [0],
        "output": {"dir": str(tmp_path / "runs")},
    }


@pytest.fixture
def small_config(small_config_dict: dict) -> ExperimentConfig:
    return ExperimentConfig.from_dict(small_config_dict)


@pytest.fixture
def config_file(tmp_path: Path, small_config_dict: dict) -> Path:
    """写入磁盘的配置文件"""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(small_config_dict), encoding="utf-8")
    return path


# ============ 钩子 fixtures ============


@pytest.fixture
def hooks() -> HookRegistry:
    return HookRegistry()
