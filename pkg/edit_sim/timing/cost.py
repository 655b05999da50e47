"""
alpha-beta 成本模型

单次集合通信（组大小 P，V 个 float64 元素）:
    all_gather / reduce_scatter: α + β·8V·(P−1)/P
    all_reduce:                  α + β·8V·2(P−1)/P
P == 1 时没有通信，成本为 0。
计算成本: 前向 c·P_l，反向 2c·P_l。
"""

from dataclasses import dataclass
from typing import List, Sequence

BYTES_PER_ELEMENT = 8


@dataclass
class CostModel:
    """计时参数（秒、秒/字节）"""

    compute_time_per_param: float = 1.9e-10
    intra_alpha: float = 1e-5
    intra_beta: float = 1.0 / 200e9
    inter_alpha: float = 5e-5
    inter_beta: float = 1.74e-11
    overlap: str = "prefetch"
    offload_penalty: float = 0.0

    @classmethod
    def from_config(cls, cfg) -> "CostModel":
        return cls(
            compute_time_per_param=cfg.compute_time_per_param,
            intra_alpha=cfg.intra_alpha,
            intra_beta=cfg.intra_beta,
            inter_alpha=cfg.inter_alpha,
            inter_beta=cfg.inter_beta,
            overlap=cfg.overlap,
            offload_penalty=cfg.offload_penalty,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def collective_cost(alpha: float, beta: float, elements: float, group_size: int, volume_factor: float = 1.0) -> float:
    if group_size <= 1:
        return 0.0
    return alpha + beta * BYTES_PER_ELEMENT * elements * volume_factor * (group_size - 1) / group_size


@dataclass(frozen=True)
class LayerPlan:
    """计时用的模型与网格规模"""

    layer_sizes: tuple
    M: int
    N: int
    batch_size: int = 1

    @property
    def K(self) -> int:
        return self.M * self.N

    @classmethod
    def uniform(cls, layers: int, params_per_layer: float, M: int, N: int, batch_size: int = 1) -> "LayerPlan":
        return cls(tuple([float(params_per_layer)] * layers), M, N, batch_size)


@dataclass(frozen=True)
class PlanCosts:
    """与节点无关、可预先计算的各项成本"""

    forward: List[float]
    backward: List[float]
    # 每步分片组通信（2 次 all-gather + 1 次 reduce-scatter，逐层累加）
    shard_comm: float
    # 同步组内逐层 all-reduce（未乘重复倍数）
    row_allreduce: List[float]

    @property
    def compute(self) -> float:
        return sum(self.forward) + sum(self.backward)


def plan_costs(cost: CostModel, plan: LayerPlan) -> PlanCosts:
    c = cost.compute_time_per_param
    forward = [c * v for v in plan.layer_sizes]
    backward = [2.0 * c * v for v in plan.layer_sizes]
    shard = 0.0
    row = []
    for v in plan.layer_sizes:
        shard += 3.0 * collective_cost(cost.intra_alpha, cost.intra_beta, v, plan.M)
        row.append(collective_cost(cost.inter_alpha, cost.inter_beta, v / plan.M, plan.N, volume_factor=2.0))
    return PlanCosts(forward=forward, backward=backward, shard_comm=shard, row_allreduce=row)


@dataclass
class StepCost:
    """单个节点一步的耗时构成"""

    compute: float
    shard_comm: float
    row_comm: float = 0.0

    @property
    def total(self) -> float:
        return self.compute + self.shard_comm + self.row_comm


def step_cost(worker: int, costs: PlanCosts, injector, t: int, p: int, warmup: bool) -> StepCost:
    """
    计算 + 通信成本，注入器决定滞后、算力倍率与跨组通信重复倍数

    warmup 为真时附加同步组内的梯度 all-reduce。
    """
    compute = costs.compute * injector.compute_scale(worker) + injector.lag_for(worker, t, p)
    row = injector.inter_factor() * sum(costs.row_allreduce) if warmup else 0.0
    return StepCost(compute=compute, shard_comm=costs.shard_comm, row_comm=row)


def sync_layer_comm(cost: CostModel, costs: PlanCosts, inter_factor: float) -> List[float]:
    """伪梯度同步的逐层通信时间（含卸载开销）"""
    return [inter_factor * r + cost.offload_penalty for r in costs.row_allreduce]
