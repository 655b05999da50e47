"""
优化器模块

- inner: 内层 SGD / AdamW
- outer: 外层 SGD / Nesterov
- schedule: 学习率调度
"""

from .inner import InnerKind, InnerOptState, inner_step, make_inner_state
from .outer import OuterKind, OuterOptState, outer_step
from .schedule import LrSchedule, ScheduleKind, lr_at, lr_at_step

__all__ = [
    "InnerKind",
    "InnerOptState",
    "inner_step",
    "make_inner_state",
    "OuterKind",
    "OuterOptState",
    "outer_step",
    "LrSchedule",
    "ScheduleKind",
    "lr_at",
    "lr_at_step",
]
