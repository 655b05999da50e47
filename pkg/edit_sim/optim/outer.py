"""
外层优化器

伪梯度约定: Δ̂ 存储为位移 θ_{t,τ} − θ_t，外层"下降"沿位移方向移动锚点。
- sgd:      anchor ← anchor + ν·Δ̂
- nesterov: m ← μ·m + Δ̂;  anchor ← anchor + ν·(μ·m + Δ̂)
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from ..core import Vector, zeros
from ..errors import DimensionError


class OuterKind(str, Enum):
    """外层优化器类型"""

    SGD = "sgd"
    NESTEROV = "nesterov"


@dataclass
class OuterOptState:
    """单个分片的外层优化器状态（动量按分片存储）"""

    kind: OuterKind
    length: int
    lr: float = 0.8
    momentum: float = 0.85
    buffer: Optional[Vector] = field(default=None, repr=False)

    def __post_init__(self):
        self.kind = OuterKind(self.kind)
        if self.buffer is None:
            self.buffer = zeros(self.length)

    def clone(self) -> "OuterOptState":
        return replace(self, buffer=self.buffer.copy())


def outer_step(state: OuterOptState, anchor: Vector, pseudo_grad: Vector) -> Vector:
    """返回新锚点；nesterov 原地更新动量"""
    if anchor.shape[0] != state.length or pseudo_grad.shape[0] != state.length:
        raise DimensionError(
            f"外层更新长度不一致: anchor={anchor.shape[0]} pseudo={pseudo_grad.shape[0]} state={state.length}"
        )
    if state.kind is OuterKind.SGD:
        return anchor + state.lr * pseudo_grad
    state.buffer = state.momentum * state.buffer + pseudo_grad
    return anchor + state.lr * (state.momentum * state.buffer + pseudo_grad)
