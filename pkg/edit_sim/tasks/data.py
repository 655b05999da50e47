"""
数据分片与批采样

每个工作节点持有独立的随机子流；(seed, worker, t, p) 唯一决定一个批。
损坏计划在指定 (worker, t, p) 上把目标放大 factor 倍，异常沿完整反向路径传播。
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Optional

from ..core import Rng
from .base import Batch, LayeredTask


@dataclass(frozen=True)
class CorruptionSchedule:
    """目标损坏计划"""

    # 受影响的工作节点
    workers: FrozenSet[int] = field(default_factory=frozenset)
    # 放大倍数，1 表示不损坏
    factor: float = 1.0
    # 第一个受影响的外层轮次
    start_round: int = 0
    # 每隔多少轮损坏一次
    every: int = 1

    def marks(self, worker_id: int, t: int, p: int) -> bool:
        if self.factor == 1.0 or worker_id not in self.workers:
            return False
        if t < self.start_round:
            return False
        return (t - self.start_round) % max(self.every, 1) == 0


@dataclass
class DataShard:
    """工作节点的数据分片"""

    worker_id: int
    rng: Rng
    task: LayeredTask
    corruption: Optional[CorruptionSchedule] = None


def make_shard(task: LayeredTask, seed: int, worker_id: int, corruption: Optional[CorruptionSchedule] = None) -> DataShard:
    # 子流 (10, worker_id) 只用于训练数据
    return DataShard(worker_id=worker_id, rng=Rng(seed, (10, worker_id)), task=task, corruption=corruption)


def sample_batch(shard: DataShard, t: int, p: int, batch_size: int) -> Batch:
    """按 (t, p) 确定性采样；p 为全局内层步号时同样适用"""
    if batch_size < 1:
        raise ValueError(f"batch_size 必须 >= 1，实际 {batch_size}")
    factor = 1.0
    if shard.corruption is not None and shard.corruption.marks(shard.worker_id, t, p):
        factor = shard.corruption.factor
    inputs, targets = shard.task.make_batch(shard.rng.substream(t, p), batch_size, factor)
    return Batch(inputs=inputs, targets=targets, worker_id=shard.worker_id, t=t, p=p)
