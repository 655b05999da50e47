"""
网格与集合通信单元测试

- 编号约定与分组
- 补零分片与还原
- all-gather / reduce-scatter / all-reduce / 加权求和 / 标量求和
"""

import math

import numpy as np
import pytest

from edit_sim.core import as_vector
from edit_sim.errors import ConfigError, DimensionError, ProtocolError
from edit_sim.mesh import (
    Collectives,
    DeviceMesh,
    GroupKind,
    build_shard_spec,
    layer_shard_spec,
    shard_layer,
    tree_sum,
    unshard_layer,
)


class TestDeviceMesh:
    """设备网格测试"""

    @pytest.mark.unit
    def test_row_major_ids(self, mesh_2x2):
        assert mesh_2x2.K == 4
        assert mesh_2x2.worker_id(1, 0) == 2
        assert mesh_2x2.coords(3) == (1, 1)

    @pytest.mark.unit
    def test_groups(self):
        mesh = DeviceMesh(2, 3)
        assert mesh.row(1) == [3, 4, 5]
        assert mesh.col(2) == [2, 5]
        assert mesh.sync_group(4).kind is GroupKind.SYNC_ROW
        assert mesh.members(mesh.shard_group(4)) == [1, 4]

    @pytest.mark.unit
    def test_every_worker_in_one_row_and_one_col(self):
        mesh = DeviceMesh(3, 4)
        rows = sorted(w for g in mesh.rows() for w in mesh.members(g))
        cols = sorted(w for g in mesh.cols() for w in mesh.members(g))
        assert rows == cols == list(range(12))

    @pytest.mark.unit
    def test_invalid_dims(self):
        with pytest.raises(ConfigError):
            DeviceMesh(0, 2)
        with pytest.raises(ValueError):
            DeviceMesh(2, 2).coords(4)


class TestSharding:
    """分片布局测试"""

    @pytest.mark.unit
    def test_padding_on_last_shard(self):
        spec = layer_shard_spec(1, 10, 4)
        assert spec.shard_len == 3
        assert spec.pad == 2
        assert spec.bounds(3) == (9, 12)

    @pytest.mark.unit
    def test_shard_unshard_is_identity(self):
        params = as_vector(np.arange(10.0))
        shards, spec = shard_layer(params, 4)
        assert [s.shape[0] for s in shards] == [3, 3, 3, 3]
        np.testing.assert_array_equal(shards[-1], [9.0, 0.0, 0.0])
        np.testing.assert_array_equal(unshard_layer(shards, spec), params)

    @pytest.mark.unit
    def test_more_shards_than_params(self):
        shards, spec = shard_layer(as_vector([1.0, 2.0]), 4)
        assert spec.shard_len == 1
        np.testing.assert_array_equal(unshard_layer(shards, spec), [1.0, 2.0])

    @pytest.mark.unit
    def test_model_spec(self):
        spec = build_shard_spec([5, 8], 2)
        assert spec.layer(1).pad == 1
        assert spec.layer(2).pad == 0


class TestCollectives:
    """集合通信测试"""

    @pytest.mark.unit
    def test_all_gather_strips_padding(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        params = as_vector([1.0, 2.0, 3.0])
        shards, spec = shard_layer(params, 2)
        col = mesh_2x2.cols()[0]
        members = mesh_2x2.members(col)
        out = coll.all_gather(dict(zip(members, shards)), col, spec)
        for m in members:
            np.testing.assert_array_equal(out[m], params)

    @pytest.mark.unit
    def test_reduce_scatter_mean(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        col = mesh_2x2.cols()[1]
        a, b = mesh_2x2.members(col)
        spec = layer_shard_spec(1, 3, 2)
        out = coll.reduce_scatter_mean({a: as_vector([1.0, 2.0, 3.0]), b: as_vector([3.0, 4.0, 5.0])}, col, spec)
        np.testing.assert_array_equal(out[a], [2.0, 3.0])
        np.testing.assert_array_equal(out[b], [4.0, 0.0])

    @pytest.mark.unit
    def test_reduce_scatter_requires_divisible_length(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        col = mesh_2x2.cols()[0]
        a, b = mesh_2x2.members(col)
        with pytest.raises(DimensionError):
            coll.reduce_scatter_mean({a: as_vector([1.0, 2.0, 3.0]), b: as_vector([1.0, 2.0, 3.0])}, col)

    @pytest.mark.unit
    def test_all_reduce_mean_identical_everywhere(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        row = mesh_2x2.rows()[0]
        a, b = mesh_2x2.members(row)
        out = coll.all_reduce_mean({a: as_vector([1.0]), b: as_vector([2.0])}, row)
        assert out[a][0] == out[b][0] == 1.5

    @pytest.mark.unit
    def test_weighted_sum_zero_weight_is_exact(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        row = mesh_2x2.rows()[1]
        a, b = mesh_2x2.members(row)
        out = coll.weighted_sum({a: as_vector([1.0, 2.0]), b: as_vector([1e300, -1e300])}, {a: 1.0, b: 0.0}, row)
        np.testing.assert_array_equal(out[a], [1.0, 2.0])

    @pytest.mark.unit
    def test_scalar_sum_propagates_inf(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        col = mesh_2x2.cols()[0]
        a, b = mesh_2x2.members(col)
        assert coll.scalar_sum({a: 1.0, b: 2.0}, col)[b] == 3.0
        assert math.isinf(coll.scalar_sum({a: 1.0, b: math.inf}, col)[a])

    @pytest.mark.unit
    def test_missing_member(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        row = mesh_2x2.rows()[0]
        with pytest.raises(ProtocolError):
            coll.all_reduce_mean({0: as_vector([1.0])}, row)

    @pytest.mark.unit
    def test_length_mismatch(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        row = mesh_2x2.rows()[0]
        with pytest.raises(DimensionError):
            coll.all_reduce_mean({0: as_vector([1.0]), 1: as_vector([1.0, 2.0])}, row)

    @pytest.mark.unit
    def test_tree_sum_order(self):
        vs = [as_vector([x]) for x in (1e16, 1.0, -1e16, 1.0)]
        # ((1e16 + 1) + (-1e16 + 1)) = 1e16 + (-1e16 + 1)
        assert tree_sum(vs)[0] == (1e16 + 1.0) + (-1e16 + 1.0)

    @pytest.mark.unit
    def test_counter_records(self, mesh_2x2):
        coll = Collectives(mesh_2x2)
        row = mesh_2x2.rows()[0]
        coll.all_reduce_mean({0: as_vector([1.0, 2.0]), 1: as_vector([1.0, 2.0])}, row)
        assert sum(coll.counter.snapshot().values()) >= 1
