"""
EDiT / A-EDiT Local-SGD 模拟器

单进程、确定性地模拟分片 Local-SGD 训练协议，并附带离散事件计时模型与收敛界检验。

主要组件:
- EditEngine: 设备网格上的分片训练引擎（分层同步、伪梯度惩罚）
- TimedRun: 计时模型，模拟滞后节点与受限带宽下的吞吐
- ExperimentConfig: 实验配置（JSON）
- run_experiment / lr_sweep / elastic_chain / report: 实验编排

使用示例:
    from edit_sim import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load("configs/quadratic_edit.json")
    result = run_experiment(cfg)
"""

__version__ = "0.1.0"
__author__ = "EDiT Sim Team"

from .config import ExperimentConfig, load_config, save_config
from .errors import (
    CalibrationError,
    CarryOverError,
    ConfigError,
    DimensionError,
    DomainError,
    EditSimError,
    NumericError,
    ProtocolError,
)
from .harness import elastic_chain, lr_sweep, report, run_experiment
from .hooks import HookPriority, HookRegistry, HookResult, HookType
from .protocol import EditEngine, build_engine, theorem_bound, theorem_check
from .timing import CostModel, Injector, TimedRun, calibrate, run_timed

__all__ = [
    "__version__",
    "ExperimentConfig",
    "load_config",
    "save_config",
    "CalibrationError",
    "CarryOverError",
    "ConfigError",
    "DimensionError",
    "DomainError",
    "EditSimError",
    "NumericError",
    "ProtocolError",
    "elastic_chain",
    "lr_sweep",
    "report",
    "run_experiment",
    "HookPriority",
    "HookRegistry",
    "HookResult",
    "HookType",
    "EditEngine",
    "build_engine",
    "theorem_bound",
    "theorem_check",
    "CostModel",
    "Injector",
    "TimedRun",
    "calibrate",
    "run_timed",
]
