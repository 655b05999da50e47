"""
内层优化器

每个工作节点每步对本地分片参数执行一次更新：
- sgd: θ ← θ − lr·g
- adamw: 解耦权重衰减 + 偏差校正的 Adam 更新
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from ..core import Vector, is_finite, zeros
from ..errors import DimensionError, NumericError


class InnerKind(str, Enum):
    """内层优化器类型"""

    SGD = "sgd"
    ADAMW = "adamw"


@dataclass
class InnerOptState:
    """单个分片的内层优化器状态"""

    kind: InnerKind
    length: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    # 已执行的更新次数
    step: int = 0
    # adamw 一阶/二阶矩
    exp_avg: Optional[Vector] = field(default=None, repr=False)
    exp_avg_sq: Optional[Vector] = field(default=None, repr=False)

    def __post_init__(self):
        self.kind = InnerKind(self.kind)
        if self.kind is InnerKind.ADAMW:
            if self.exp_avg is None:
                self.exp_avg = zeros(self.length)
            if self.exp_avg_sq is None:
                self.exp_avg_sq = zeros(self.length)

    def clone(self) -> "InnerOptState":
        """深拷贝（回滚快照用）"""
        return replace(
            self,
            exp_avg=None if self.exp_avg is None else self.exp_avg.copy(),
            exp_avg_sq=None if self.exp_avg_sq is None else self.exp_avg_sq.copy(),
        )


def make_inner_state(kind: str, length: int, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> InnerOptState:
    return InnerOptState(
        kind=InnerKind(kind),
        length=length,
        beta1=betas[0],
        beta2=betas[1],
        eps=eps,
        weight_decay=weight_decay,
    )


def inner_step(state: InnerOptState, params: Vector, grad: Vector, lr: float) -> Vector:
    """
    执行一次内层更新

    原地推进 state，返回新的参数向量（输入参数不修改）。

    Raises:
        DimensionError: 长度不一致
        NumericError: 梯度含 NaN/Inf，此时 state 保持不变
    """
    if params.shape[0] != state.length or grad.shape[0] != state.length:
        raise DimensionError(
            f"内层更新长度不一致: params={params.shape[0]} grad={grad.shape[0]} state={state.length}"
        )
    if not is_finite(grad):
        raise NumericError("梯度包含非有限值")

    state.step += 1
    if state.kind is InnerKind.SGD:
        return params - lr * grad

    theta = params
    if state.weight_decay != 0.0:
        theta = theta * (1.0 - lr * state.weight_decay)
    state.exp_avg = state.beta1 * state.exp_avg + (1.0 - state.beta1) * grad
    state.exp_avg_sq = state.beta2 * state.exp_avg_sq + (1.0 - state.beta2) * grad * grad
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    denom = np.sqrt(state.exp_avg_sq / bias2) + state.eps
    return theta - lr * (state.exp_avg / bias1) / denom
