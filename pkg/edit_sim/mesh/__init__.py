"""
网格与集合通信模块
"""

from .collectives import CommCounter, Collectives, tree_mean, tree_sum
from .mesh import DeviceMesh, GroupId, GroupKind, mesh_build
from .sharding import (
    LayerShardSpec,
    ShardSpec,
    build_shard_spec,
    layer_shard_spec,
    shard_layer,
    unshard_layer,
)

__all__ = [
    "CommCounter",
    "Collectives",
    "tree_mean",
    "tree_sum",
    "DeviceMesh",
    "GroupId",
    "GroupKind",
    "mesh_build",
    "LayerShardSpec",
    "ShardSpec",
    "build_shard_spec",
    "layer_shard_spec",
    "shard_layer",
    "unshard_layer",
]
