"""
工作节点状态

每个节点按层持有: 参数分片 θ^{(i,l)}、锚点分片 θ_t^{(i,l)}、内层优化器状态、
外层动量分片，以及上次同步时的内层状态快照（回滚时恢复）。
"""

from dataclasses import dataclass, field
from typing import List

from ..core import Vector
from ..optim import InnerOptState, OuterOptState
from ..tasks import DataShard


@dataclass
class WorkerState:
    """单个工作节点"""

    worker_id: int
    i: int
    j: int
    params: List[Vector]
    anchors: List[Vector]
    inner: List[InnerOptState]
    outer: List[OuterOptState]
    data: DataShard
    inner_snapshot: List[InnerOptState] = field(default_factory=list)
    # 外层轮次 t 与当前轮内步号 p
    t: int = 0
    p: int = 0
    # 本轮出现过非有限梯度或损失
    faulted: bool = False

    def snapshot_anchors(self) -> None:
        """锚点 ← 当前参数，并记录内层状态"""
        self.anchors = [p.copy() for p in self.params]
        self.snapshot_inner()

    def snapshot_inner(self) -> None:
        self.inner_snapshot = [s.clone() for s in self.inner]

    def restore_layer(self, layer: int) -> None:
        """回滚第 layer 层（1 起）: 参数回到锚点，内层状态回到快照"""
        k = layer - 1
        self.params[k] = self.anchors[k].copy()
        if self.inner_snapshot:
            self.inner[k] = self.inner_snapshot[k].clone()
