"""
均匀分片

每层参数按上取整切成 M 段，最后一段补零。补零元素参与归约，gather 时去掉。
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..core import Vector
from ..errors import DimensionError


@dataclass(frozen=True)
class LayerShardSpec:
    """单层的分片布局"""

    layer: int
    param_count: int
    num_shards: int
    shard_len: int
    pad: int

    def bounds(self, rank: int) -> Tuple[int, int]:
        """分片 rank 在补零后布局中的 [start, end)"""
        start = rank * self.shard_len
        return start, start + self.shard_len


@dataclass(frozen=True)
class ShardSpec:
    """全模型的分片布局"""

    layers: Tuple[LayerShardSpec, ...]

    def layer(self, l: int) -> LayerShardSpec:
        return self.layers[l - 1]


def layer_shard_spec(layer: int, param_count: int, num_shards: int) -> LayerShardSpec:
    if num_shards < 1:
        raise ValueError(f"分片数必须 >= 1: {num_shards}")
    shard_len = math.ceil(param_count / num_shards)
    return LayerShardSpec(
        layer=layer,
        param_count=param_count,
        num_shards=num_shards,
        shard_len=shard_len,
        pad=shard_len * num_shards - param_count,
    )


def build_shard_spec(layer_sizes: Sequence[int], num_shards: int) -> ShardSpec:
    return ShardSpec(tuple(layer_shard_spec(i + 1, n, num_shards) for i, n in enumerate(layer_sizes)))


def shard_layer(layer_params: Vector, num_shards: int, layer: int = 1) -> Tuple[List[Vector], LayerShardSpec]:
    """切分一层参数，返回 (各分片, 布局)"""
    spec = layer_shard_spec(layer, layer_params.shape[0], num_shards)
    padded = np.concatenate([layer_params, np.zeros(spec.pad)])
    shards = [padded[slice(*spec.bounds(r))].copy() for r in range(num_shards)]
    return shards, spec


def unshard_layer(shards: Sequence[Vector], spec: LayerShardSpec) -> Vector:
    """按分片序号拼接并去掉补零"""
    if len(shards) != spec.num_shards:
        raise DimensionError(f"分片个数 {len(shards)} != {spec.num_shards}")
    for s in shards:
        if s.shape[0] != spec.shard_len:
            raise DimensionError(f"分片长度 {s.shape[0]} != {spec.shard_len}")
    return np.concatenate(list(shards))[: spec.param_count]
