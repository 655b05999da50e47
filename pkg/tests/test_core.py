"""
core 模块单元测试

- 顺序累加与向量运算
- 带子流的随机数生成器
"""

import numpy as np
import pytest

from edit_sim.core import Rng, as_vector, axpy, dot, l2_norm, max_abs_diff, normal_sample, ordered_sum, sq_norm
from edit_sim.errors import DimensionError


class TestVector:
    """向量运算测试"""

    @pytest.mark.unit
    def test_ordered_sum_is_left_to_right(self):
        """(1e16 + 1) - 1e16 按顺序累加得 0"""
        assert ordered_sum([1e16, 1.0, -1e16]) == 0.0

    @pytest.mark.unit
    def test_ordered_sum_empty(self):
        assert ordered_sum([]) == 0.0

    @pytest.mark.unit
    def test_norms(self):
        x = as_vector([3.0, 4.0])
        assert sq_norm(x) == 25.0
        assert l2_norm(x) == 5.0
        assert l2_norm(as_vector([])) == 0.0

    @pytest.mark.unit
    def test_axpy_and_dot(self):
        x = as_vector([1.0, 2.0])
        y = as_vector([10.0, 20.0])
        np.testing.assert_array_equal(axpy(2.0, x, y), [12.0, 24.0])
        assert dot(x, y) == 50.0
        # 输入不被修改
        np.testing.assert_array_equal(x, [1.0, 2.0])

    @pytest.mark.unit
    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            axpy(1.0, as_vector([1.0]), as_vector([1.0, 2.0]))
        with pytest.raises(DimensionError):
            max_abs_diff(as_vector([1.0]), as_vector([1.0, 2.0]))

    @pytest.mark.unit
    def test_as_vector_rejects_matrix(self):
        with pytest.raises(DimensionError):
            as_vector([[1.0, 2.0]])

    @pytest.mark.unit
    def test_max_abs_diff(self):
        assert max_abs_diff(as_vector([1.0, -2.0]), as_vector([1.5, 1.0])) == 3.0


class TestRng:
    """随机数生成器测试"""

    @pytest.mark.unit
    def test_same_seed_same_draws(self):
        a = Rng(7, (1, 2)).normal(size=5)
        b = Rng(7, (1, 2)).normal(size=5)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.unit
    def test_streams_are_independent(self):
        a = Rng(7, (1,)).normal(size=5)
        b = Rng(7, (2,)).normal(size=5)
        assert not np.array_equal(a, b)

    @pytest.mark.unit
    def test_substream_does_not_consume_parent(self):
        parent = Rng(3)
        parent.substream(5).normal(size=10)
        np.testing.assert_array_equal(parent.normal(size=3), Rng(3).normal(size=3))

    @pytest.mark.unit
    def test_reset_replays(self):
        rng = Rng(11, (4,))
        first = rng.uniform(size=4)
        np.testing.assert_array_equal(rng.reset().uniform(size=4), first)

    @pytest.mark.unit
    def test_clipped_normal_respects_bound(self):
        draws = Rng(0).clipped_normal(std=10.0, clip_abs=0.5, size=1000)
        assert np.all(np.abs(draws) <= 0.5)

    @pytest.mark.unit
    def test_normal_sample_clamps_around_mean(self):
        rng = Rng(0)
        for _ in range(200):
            x = normal_sample(rng, mean=2.0, std=10.0, clip_abs=0.1)
            assert abs(x - 2.0) <= 0.1 + 1e-15

    @pytest.mark.unit
    def test_normal_sample_zero_std_still_advances(self):
        a, b = Rng(5), Rng(5)
        assert normal_sample(a, 1.0, 0.0, 1.0) == 1.0
        b.normal()
        assert a.normal() == b.normal()
