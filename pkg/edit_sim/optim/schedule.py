"""
学习率调度

- constant: η
- inv_sqrt: η/√(step+1)，step = t·τ + p
- cosine: 线性预热后半余弦衰减到 η·min_lr_ratio
"""

import math
from dataclasses import dataclass
from enum import Enum


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    INV_SQRT = "inv_sqrt"


@dataclass(frozen=True)
class LrSchedule:
    """内层学习率调度"""

    kind: ScheduleKind
    base_lr: float
    # cosine 专用
    total_steps: int = 1
    warmup_steps: int = 0
    min_lr_ratio: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if self.base_lr <= 0:
            raise ValueError(f"base_lr 必须为正: {self.base_lr}")
        if self.kind is ScheduleKind.COSINE and not 0 < self.min_lr_ratio <= 1:
            raise ValueError(f"min_lr_ratio 必须在 (0, 1]: {self.min_lr_ratio}")


def lr_at_step(schedule: LrSchedule, step: int) -> float:
    """按全局内层步号取学习率"""
    if schedule.kind is ScheduleKind.CONSTANT:
        return schedule.base_lr
    if schedule.kind is ScheduleKind.INV_SQRT:
        return schedule.base_lr / math.sqrt(step + 1)

    if step < schedule.warmup_steps:
        return schedule.base_lr * (step + 1) / schedule.warmup_steps
    span = max(1, schedule.total_steps - schedule.warmup_steps)
    progress = min(1.0, (step - schedule.warmup_steps) / span)
    ratio = schedule.min_lr_ratio
    return schedule.base_lr * (ratio + (1.0 - ratio) * 0.5 * (1.0 + math.cos(math.pi * progress)))


def lr_at(schedule: LrSchedule, t: int, p: int, tau: int) -> float:
    """η_{t,p}"""
    if p < 0:
        raise ValueError(f"内层步号不能为负: {p}")
    return lr_at_step(schedule, t * tau + p)
