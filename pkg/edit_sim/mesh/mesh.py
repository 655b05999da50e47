"""
设备网格

M×N 网格，工作节点编号按行优先: id = i·N + j。
- 第 i 行是模型同步组（N 个节点持有相同分片，周期性同步伪梯度）
- 第 j 列是模型分片组（M 个节点共同持有一份完整模型，每步 all-gather / reduce-scatter）
节点在所在列中的分片序号等于行号 i。
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

from ..errors import ConfigError


class GroupKind(str, Enum):
    """通信组类型"""

    SYNC_ROW = "sync_row"
    SHARD_COL = "shard_col"


@dataclass(frozen=True)
class GroupId:
    """通信组标识"""

    kind: GroupKind
    index: int


@dataclass(frozen=True)
class DeviceMesh:
    """M 行 N 列的设备网格"""

    M: int
    N: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ConfigError(f"网格维度必须 >= 1，实际 {self.M}x{self.N}", "mesh")

    @property
    def K(self) -> int:
        return self.M * self.N

    def worker_id(self, i: int, j: int) -> int:
        return i * self.N + j

    def coords(self, worker_id: int) -> Tuple[int, int]:
        if not 0 <= worker_id < self.K:
            raise ValueError(f"节点编号越界: {worker_id}")
        return divmod(worker_id, self.N)

    def row(self, i: int) -> List[int]:
        """同步组成员（按列序）"""
        return [self.worker_id(i, j) for j in range(self.N)]

    def col(self, j: int) -> List[int]:
        """分片组成员（按分片序号）"""
        return [self.worker_id(i, j) for i in range(self.M)]

    def sync_group(self, worker_id: int) -> GroupId:
        return GroupId(GroupKind.SYNC_ROW, self.coords(worker_id)[0])

    def shard_group(self, worker_id: int) -> GroupId:
        return GroupId(GroupKind.SHARD_COL, self.coords(worker_id)[1])

    def members(self, group: GroupId) -> List[int]:
        if group.kind is GroupKind.SYNC_ROW:
            if not 0 <= group.index < self.M:
                raise ValueError(f"同步组编号越界: {group.index}")
            return self.row(group.index)
        if not 0 <= group.index < self.N:
            raise ValueError(f"分片组编号越界: {group.index}")
        return self.col(group.index)

    def rows(self) -> List[GroupId]:
        return [GroupId(GroupKind.SYNC_ROW, i) for i in range(self.M)]

    def cols(self) -> List[GroupId]:
        return [GroupId(GroupKind.SHARD_COL, j) for j in range(self.N)]


def mesh_build(M: int, N: int) -> DeviceMesh:
    return DeviceMesh(M=M, N=N)
