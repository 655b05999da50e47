"""
伪梯度惩罚

同步时对每层伪梯度依次执行：
1. 异常剔除：EMA z-score 超过 δ 的范数记为 +inf
2. 加权平均：w = softmax(−G)，+inf 的权重精确为 0
3. 梯度裁剪：β = min(φ/(Ḡ+ε), 1)
全部成员被判为异常时整组回滚到上次同步的参数。
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import Vector, ordered_sum

INF = math.inf


@dataclass
class SyncConfig:
    """同步参数"""

    # 每轮内层步数 τ
    tau: int = 128
    # 预热步数，全局步号 <= t_warm 时每步 all-reduce；inf 表示始终同步训练
    t_warm: float = 0
    # 异常阈值 δ
    delta: float = 3.0
    # EMA 系数 α
    alpha: float = 0.02
    # 裁剪阈值 φ
    phi: float = 10.0
    # 防除零 ε
    eps: float = 1e-6
    # 异常检测生效前需要观测的同步轮数
    ema_warmup_rounds: int = 10
    # 三个惩罚组件的开关
    anomaly_elimination: bool = True
    weighted_averaging: bool = True
    gradient_clip: bool = True

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau 必须 >= 1: {self.tau}")
        if self.phi <= 0 or self.eps <= 0:
            raise ValueError("phi 与 eps 必须为正")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha 必须在 (0, 1]: {self.alpha}")

    @property
    def averaging(self) -> str:
        return "penalty" if self.weighted_averaging else "uniform"

    @property
    def penalty_enabled(self) -> bool:
        return self.anomaly_elimination or self.weighted_averaging or self.gradient_clip


@dataclass
class EmaStat:
    """单个 (worker, layer) 的范数统计"""

    mu: float = 0.0
    sigma: float = 0.0
    rounds_observed: int = 0


class SyncStats:
    """所有 (worker, layer) 的 EMA 统计"""

    def __init__(self) -> None:
        self._stats: Dict[Tuple[int, int], EmaStat] = {}

    def get(self, worker: int, layer: int) -> EmaStat:
        key = (worker, layer)
        if key not in self._stats:
            self._stats[key] = EmaStat()
        return self._stats[key]

    def set(self, worker: int, layer: int, stat: EmaStat) -> None:
        self._stats[(worker, layer)] = stat

    def items(self):
        return sorted(self._stats.items())


def ema_update(stats: SyncStats, worker: int, layer: int, G: float, alpha: float) -> EmaStat:
    """
    μ' = αG + (1−α)μ;  σ' = √((1−α)σ² + α(G−μ')²)

    按增量形式计算：d = G − μ，μ' = μ + αd，G − μ' = (1−α)d。G == μ 时 μ 与 σ = 0 精确保持。
    G 为 +inf 时不更新。首次观测直接以 G 作为均值、σ = 0。
    """
    stat = stats.get(worker, layer)
    if math.isinf(G):
        return stat
    if stat.rounds_observed == 0:
        stat.mu = G
        stat.sigma = 0.0
    else:
        d = G - stat.mu
        residual = (1.0 - alpha) * d
        stat.sigma = math.sqrt((1.0 - alpha) * stat.sigma ** 2 + alpha * residual ** 2)
        stat.mu = stat.mu + alpha * d
    stat.rounds_observed += 1
    return stat


def is_anomaly(stats: SyncStats, worker: int, layer: int, G: float, cfg: SyncConfig) -> bool:
    stat = stats.get(worker, layer)
    if stat.rounds_observed < cfg.ema_warmup_rounds:
        return False
    if math.isinf(G):
        return True
    # σ == 0 时 z 无定义，视为正常
    if stat.sigma == 0.0:
        return False
    return (G - stat.mu) / stat.sigma > cfg.delta


def penalty_weights(norms: Sequence[float]) -> Optional[List[float]]:
    """
    w_i = exp(−G_i) / Σ_j exp(−G_j)

    以有限范数中的最小值做平移；全部为 +inf 时返回 None（调用方回滚）。
    """
    finite = [g for g in norms if not math.isinf(g)]
    if not finite:
        return None
    shift = min(finite)
    exps = [0.0 if math.isinf(g) else math.exp(-(g - shift)) for g in norms]
    total = ordered_sum(exps)
    return [e / total for e in exps]


def uniform_weights(norms: Sequence[float]) -> Optional[List[float]]:
    """有限范数成员等权，+inf 成员权重为 0"""
    count = sum(1 for g in norms if not math.isinf(g))
    if count == 0:
        return None
    return [0.0 if math.isinf(g) else 1.0 / count for g in norms]


def clip_coefficient(G_bar: float, phi: float, eps: float) -> float:
    return min(phi / (G_bar + eps), 1.0)


def clip_pseudo(delta_bar: Vector, G_bar: float, cfg: SyncConfig) -> Tuple[Vector, float]:
    """Δ̂ = β·Δ̄"""
    beta = clip_coefficient(G_bar, cfg.phi, cfg.eps)
    return beta * delta_bar, beta


@dataclass
class PenaltyOutcome:
    """单层同步结果"""

    layer: int
    # 按节点编号排列
    norms: List[float] = field(default_factory=list)
    anomalies: List[bool] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)
    G_bar: float = 0.0
    beta: float = 1.0
    rollback: bool = False

    @property
    def anomaly_count(self) -> int:
        return int(sum(self.anomalies))

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "norms": [None if math.isinf(g) else g for g in self.norms],
            "anomalies": self.anomaly_count,
            "weights": self.weights,
            "G_bar": self.G_bar,
            "beta": self.beta,
            "rollback": self.rollback,
        }


def weight_ratio_bound(G_anomalous: float, G_max_normal: float) -> float:
    """异常成员与最大权重之比的上界 e^{−(G_anom − G_max_normal)}"""
    return float(np.exp(-(G_anomalous - G_max_normal)))
