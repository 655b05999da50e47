"""
收敛界测试
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from edit_sim.errors import DomainError
from edit_sim.mesh import DeviceMesh
from edit_sim.protocol import TheoremParams, theorem_bound, theorem_check
from edit_sim.protocol.theorem import batched_min_grad, min_grad_trajectory
from edit_sim.tasks import QuadraticTask, make_shard, sample_batch

ONES = TheoremParams(
    eta=1.0, nu=1.0, tau=1, T=4, phi=1.0, eps=1.0, n=1, smoothness_L=1.0, Ginf=1.0, loss_at_init=1.0
)


class TestTheoremBound:
    """界的数值性质"""

    @pytest.mark.unit
    def test_all_ones(self):
        expected = 0.5 * (1.0 + 1.5 * (1.0 + math.log(4.0)))
        assert theorem_bound(ONES) == pytest.approx(expected, rel=1e-12)
        assert theorem_bound(ONES) == pytest.approx(2.2897, abs=1e-4)

    @pytest.mark.unit
    def test_decreases_in_T(self):
        params = replace(ONES, eta=0.01, tau=8, eps=0.1)
        assert theorem_bound(replace(params, T=4000)) < theorem_bound(replace(params, T=1000))

    @pytest.mark.unit
    def test_linear_in_n(self):
        params = replace(ONES, eta=0.1, tau=4, T=100, loss_at_init=3.0)
        # 与 n 无关的部分
        constant = params.loss_at_init / params.nu / (2.0 * math.sqrt(params.tau) * params.eta * (math.sqrt(params.T) - 1.0))
        b1 = theorem_bound(replace(params, n=5))
        b2 = theorem_bound(replace(params, n=10))
        assert (b2 - constant) == pytest.approx(2.0 * (b1 - constant), rel=1e-12)

    @pytest.mark.unit
    @pytest.mark.parametrize("T", [0, 1])
    def test_small_T_rejected(self, T):
        with pytest.raises(DomainError):
            theorem_bound(replace(ONES, T=T))

    @pytest.mark.unit
    @pytest.mark.parametrize("field", ["eta", "nu", "phi", "eps", "Ginf"])
    def test_non_positive_rejected(self, field):
        with pytest.raises(DomainError):
            theorem_bound(replace(ONES, **{field: 0.0}))


class TestTheoremCheck:
    """二次型上的经验检验"""

    @pytest.mark.integration
    def test_small_check(self):
        result = theorem_check(n=8, workers=2, tau=4, checkpoints=(10, 40), seeds=(0, 1))
        assert result.bound_holds
        assert result.mean_min_grad_sq[40] <= result.mean_min_grad_sq[10]
        assert len(result.per_seed[10]) == 2

    @pytest.mark.slow
    def test_full_check(self):
        start = time.perf_counter()
        result = theorem_check()
        assert result.passed
        assert time.perf_counter() - start < 60.0


class TestBatchedTrajectory:
    """向量化轨迹与 EditEngine 的一致性"""

    @pytest.mark.integration
    def test_matches_engine(self):
        task = QuadraticTask(n=8, cond=10.0, seed=0, noise_std=0.5, noise_clip=1.0)
        tau, batch_size, checkpoints, seeds = 4, 4, (6, 15), (0, 3)

        def engine_noise(seed, worker, t):
            shard = make_shard(task, seed, worker)
            return np.stack([task.begin(sample_batch(shard, t, p, batch_size)) for p in range(tau)])

        batched = batched_min_grad(task, 2, 0.1, 1.0, tau, checkpoints, seeds, engine_noise)
        for k, seed in enumerate(seeds):
            reference = min_grad_trajectory(task, DeviceMesh(1, 2), 0.1, 1.0, tau, checkpoints, seed, batch_size)
            for T in checkpoints:
                assert batched[T][k] == pytest.approx(reference[T], rel=1e-9)

    @pytest.mark.integration
    def test_methods_agree_without_noise(self):
        kwargs = dict(n=8, workers=2, tau=4, checkpoints=(5, 12), seeds=(0, 1), noise_std=0.0)
        batched = theorem_check(**kwargs)
        engine = theorem_check(method="engine", **kwargs)
        for T in (5, 12):
            assert batched.per_seed[T] == pytest.approx(engine.per_seed[T], rel=1e-9)
        assert batched.bounds == engine.bounds

    @pytest.mark.unit
    def test_unknown_method(self):
        with pytest.raises(ValueError):
            theorem_check(n=8, workers=2, tau=2, checkpoints=(2, 4), seeds=(0,), method="fast")
