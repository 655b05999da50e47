"""
模拟集合通信

单进程内对各成员的内存状态做函数调用。所有归约都按成员序号升序的
固定成对树执行，重复调用逐位一致；通信耗时由 timing 模块单独建模。
"""

import logging
from collections import Counter
from typing import Dict, List, Mapping, Sequence

import numpy as np

from ..core import Vector
from ..errors import DimensionError, ProtocolError
from .mesh import DeviceMesh, GroupId
from .sharding import LayerShardSpec

logger = logging.getLogger(__name__)


class CommCounter:
    """按 (操作, 组类型) 统计调用次数与传输元素数"""

    def __init__(self) -> None:
        self.calls: Counter = Counter()
        self.elements: Counter = Counter()

    def record(self, op: str, group: GroupId, elements: int) -> None:
        key = f"{op}:{group.kind.value}"
        self.calls[key] += 1
        self.elements[key] += elements

    def snapshot(self) -> Dict[str, int]:
        return dict(sorted(self.elements.items()))


def _ordered_inputs(mesh: DeviceMesh, group: GroupId, inputs: Mapping[int, object]) -> List:
    members = mesh.members(group)
    missing = [m for m in members if m not in inputs]
    if missing:
        raise ProtocolError(f"{group.kind.value}[{group.index}] 缺少成员: {missing}")
    return [inputs[m] for m in members]


def _check_lengths(vectors: Sequence[Vector]) -> int:
    length = vectors[0].shape[0]
    for v in vectors[1:]:
        if v.shape[0] != length:
            raise DimensionError(f"集合通信输入长度不一致: {v.shape[0]} != {length}")
    return length


def tree_sum(vectors: Sequence[Vector]) -> Vector:
    """升序成对树求和: ((v0+v1)+(v2+v3))+..."""
    level = [np.asarray(v, dtype=np.float64) for v in vectors]
    while len(level) > 1:
        nxt = [level[k] + level[k + 1] for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0].copy()


def tree_mean(vectors: Sequence[Vector]) -> Vector:
    return tree_sum(vectors) / len(vectors)


class Collectives:
    """绑定到一个网格的集合通信"""

    def __init__(self, mesh: DeviceMesh, counter: CommCounter | None = None):
        self.mesh = mesh
        self.counter = counter or CommCounter()

    def all_gather(self, shards: Mapping[int, Vector], group: GroupId, spec: LayerShardSpec | None = None) -> Dict[int, Vector]:
        """按序号拼接，去掉补零后分发给每个成员"""
        ordered = _ordered_inputs(self.mesh, group, shards)
        shard_len = _check_lengths(ordered)
        full = np.concatenate(ordered)
        if spec is not None:
            if shard_len != spec.shard_len:
                raise DimensionError(f"分片长度 {shard_len} != {spec.shard_len}")
            full = full[: spec.param_count]
        self.counter.record("all_gather", group, full.shape[0])
        return {m: full.copy() for m in self.mesh.members(group)}

    def reduce_scatter_mean(self, grads: Mapping[int, Vector], group: GroupId, spec: LayerShardSpec | None = None) -> Dict[int, Vector]:
        """求均值后按分片布局散发，第 r 个成员得到第 r 段"""
        ordered = _ordered_inputs(self.mesh, group, grads)
        _check_lengths(ordered)
        mean = tree_mean(ordered)
        members = self.mesh.members(group)
        if spec is None:
            if mean.shape[0] % len(members):
                raise DimensionError(f"长度 {mean.shape[0]} 不能被 {len(members)} 整除且未给出分片布局")
            shard_len = mean.shape[0] // len(members)
        else:
            if mean.shape[0] != spec.param_count:
                raise DimensionError(f"梯度长度 {mean.shape[0]} != {spec.param_count}")
            mean = np.concatenate([mean, np.zeros(spec.pad)])
            shard_len = spec.shard_len
        self.counter.record("reduce_scatter", group, mean.shape[0])
        return {m: mean[r * shard_len:(r + 1) * shard_len].copy() for r, m in enumerate(members)}

    def all_reduce_mean(self, vectors: Mapping[int, Vector], group: GroupId) -> Dict[int, Vector]:
        ordered = _ordered_inputs(self.mesh, group, vectors)
        _check_lengths(ordered)
        mean = tree_mean(ordered)
        self.counter.record("all_reduce", group, mean.shape[0])
        return {m: mean.copy() for m in self.mesh.members(group)}

    def weighted_sum(self, vectors: Mapping[int, Vector], weights: Mapping[int, float], group: GroupId) -> Dict[int, Vector]:
        """Σ w_k·v_k，同样按成对树归约；权重为 0 的成员贡献精确的零"""
        ordered = _ordered_inputs(self.mesh, group, vectors)
        _check_lengths(ordered)
        ws = _ordered_inputs(self.mesh, group, weights)
        total = tree_sum([w * v if w != 0.0 else np.zeros_like(v) for w, v in zip(ws, ordered)])
        self.counter.record("all_reduce", group, total.shape[0])
        return {m: total.copy() for m in self.mesh.members(group)}

    def scalar_sum(self, values: Mapping[int, float], group: GroupId) -> Dict[int, float]:
        """按序号从左到右求和，可含 +inf"""
        ordered = _ordered_inputs(self.mesh, group, values)
        total = 0.0
        for v in ordered:
            total += float(v)
        self.counter.record("scalar_sum", group, 1)
        return {m: total for m in self.mesh.members(group)}
