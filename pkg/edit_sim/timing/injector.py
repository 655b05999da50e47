"""
扰动注入

- random_straggler: 每步随机选一个节点滞后 lag 秒
- consistent_straggler: 固定节点每步滞后
- limited_bandwidth: 跨组通信重复 repeat_factor 次
compute_scale 与注入类型无关，用于构造算力异构的节点。
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet

from ..core import Rng

# 随机滞后节点使用的子流编号
_STRAGGLER_STREAM = 20


@dataclass
class Injector:
    kind: str = "none"
    lag_seconds: float = 0.0
    repeat_factor: float = 1.0
    targets: FrozenSet[int] = field(default_factory=lambda: frozenset({0}))
    scales: Dict[int, float] = field(default_factory=dict)
    K: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.lag_seconds < 0:
            raise ValueError(f"lag_seconds 不能为负: {self.lag_seconds}")
        if self.repeat_factor < 1:
            raise ValueError(f"repeat_factor 必须 >= 1: {self.repeat_factor}")
        self._rng = Rng(self.seed, (_STRAGGLER_STREAM,))
        self._chosen: Dict[tuple, int] = {}

    @classmethod
    def from_config(cls, cfg, K: int, seed: int) -> "Injector":
        return cls(
            kind=cfg.kind,
            lag_seconds=cfg.lag_seconds,
            repeat_factor=cfg.repeat_factor,
            targets=frozenset(cfg.target_workers),
            scales=dict(cfg.compute_scale),
            K=K,
            seed=seed,
        )

    def chosen(self, t: int, p: int) -> int:
        """(t, p) 步被选中的随机滞后节点"""
        key = (t, p)
        if key not in self._chosen:
            self._chosen[key] = self._rng.substream(t, p).integers(0, self.K)
        return self._chosen[key]

    def lag_for(self, worker: int, t: int, p: int) -> float:
        if self.lag_seconds == 0.0:
            return 0.0
        if self.kind == "random_straggler":
            return self.lag_seconds if worker == self.chosen(t, p) else 0.0
        if self.kind == "consistent_straggler":
            return self.lag_seconds if worker in self.targets else 0.0
        return 0.0

    def inter_factor(self) -> float:
        return self.repeat_factor if self.kind == "limited_bandwidth" else 1.0

    def compute_scale(self, worker: int) -> float:
        return self.scales.get(worker, 1.0)
