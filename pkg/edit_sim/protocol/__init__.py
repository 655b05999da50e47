"""
EDiT 协议模块

- engine: 分片训练引擎
- sync / penalty: 分层同步与伪梯度惩罚
- variants: baseline / post_local_sgd / diloco / edit / a_edit
- reference: 不分片的参考实现
- theorem: 收敛界及其经验检验
"""

from .engine import EditEngine, InnerSpec, OuterSpec, RoundMetrics
from .penalty import (
    EmaStat,
    PenaltyOutcome,
    SyncConfig,
    SyncStats,
    clip_coefficient,
    clip_pseudo,
    ema_update,
    is_anomaly,
    penalty_weights,
    uniform_weights,
)
from .reference import reference_run
from .sync import module_norms, pseudo_gradients, sync_group, sync_layer
from .theorem import TheoremCheckResult, TheoremParams, theorem_bound, theorem_check
from .variants import PROTOCOLS, ProtocolPreset, build_engine, make_protocol
from .worker import WorkerState

__all__ = [
    "EditEngine",
    "InnerSpec",
    "OuterSpec",
    "RoundMetrics",
    "EmaStat",
    "PenaltyOutcome",
    "SyncConfig",
    "SyncStats",
    "clip_coefficient",
    "clip_pseudo",
    "ema_update",
    "is_anomaly",
    "penalty_weights",
    "uniform_weights",
    "reference_run",
    "module_norms",
    "pseudo_gradients",
    "sync_group",
    "sync_layer",
    "TheoremCheckResult",
    "TheoremParams",
    "theorem_bound",
    "theorem_check",
    "PROTOCOLS",
    "ProtocolPreset",
    "build_engine",
    "make_protocol",
    "WorkerState",
]
