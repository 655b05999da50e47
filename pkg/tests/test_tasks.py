"""
任务模块单元测试

- 参数按层切分
- 二次型的梯度与常数
- mlp 解析梯度与中心差分一致
- 数据分片与损坏计划
"""

from pathlib import Path

import numpy as np
import pytest

from edit_sim.config import ExperimentConfig, TaskConfig
from edit_sim.core import Rng
from edit_sim.errors import ConfigError
from edit_sim.mesh import DeviceMesh
from edit_sim.optim import LrSchedule
from edit_sim.protocol import EditEngine, InnerSpec, OuterSpec, SyncConfig, build_engine
from edit_sim.tasks import (
    Batch,
    CorruptionSchedule,
    MlpTask,
    QuadraticTask,
    make_shard,
    quadratic_make,
    relative_error,
    sample_batch,
    split_evenly,
)

CONFIGS = Path(__file__).parent.parent / "configs"


def central_difference(task, theta, batch, h=1e-6):
    grad = np.zeros_like(theta)
    for k in range(theta.shape[0]):
        plus = theta.copy()
        minus = theta.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (task.batch_loss(plus, batch) - task.batch_loss(minus, batch)) / (2.0 * h)
    return grad


class TestSplitEvenly:
    """按层切分测试"""

    @pytest.mark.unit
    def test_remainder_on_last_layer(self):
        assert split_evenly(10, 4) == [3, 3, 3, 1]
        assert split_evenly(8, 2) == [4, 4]

    @pytest.mark.unit
    @pytest.mark.parametrize("n, expected", [(5, [2, 1, 1, 1]), (6, [2, 2, 1, 1]), (9, [3, 2, 2, 2]), (4, [1, 1, 1, 1])])
    def test_always_exact_layer_count(self, n, expected):
        assert split_evenly(n, 4) == expected

    @pytest.mark.unit
    def test_fewer_params_than_layers(self):
        with pytest.raises(ValueError):
            split_evenly(3, 4)

    @pytest.mark.unit
    def test_sizes_sum_to_n(self):
        for layers in range(1, 6):
            for n in range(layers, 40):
                sizes = split_evenly(n, layers)
                assert len(sizes) == layers
                assert sum(sizes) == n
                assert min(sizes) >= 1


class TestQuadraticTask:
    """二次型任务测试"""

    @pytest.mark.unit
    def test_spectrum_endpoints(self, quad_task):
        assert quad_task.eigenvalues[0] == 1.0
        assert quad_task.eigenvalues[-1] == 10.0
        assert quad_task.smoothness_L == 10.0

    @pytest.mark.unit
    def test_optimum_has_zero_gradient(self, quad_task):
        np.testing.assert_array_equal(quad_task.full_grad(quad_task.theta_star), np.zeros(8))
        assert quad_task.loss(quad_task.theta_star) == 0.0

    @pytest.mark.unit
    def test_noise_free_batch_gradient_equals_full_gradient(self, quad_task):
        theta = quad_task.init_params(Rng(1))
        batch = Batch(inputs=np.zeros((2, 0)), targets=np.zeros((2, 8)))
        _, grad = quad_task.loss_and_grad(theta, batch)
        np.testing.assert_array_equal(grad, quad_task.full_grad(theta))

    @pytest.mark.unit
    def test_gradient_matches_finite_difference(self, quad_task):
        theta = quad_task.init_params(Rng(2))
        inputs, targets = quad_task.make_batch(Rng(3), 4)
        batch = Batch(inputs=inputs, targets=targets)
        _, grad = quad_task.loss_and_grad(theta, batch)
        assert relative_error(grad, central_difference(quad_task, theta, batch)) <= 1e-6

    @pytest.mark.unit
    def test_gradient_bounded_by_ginf(self, quad_task):
        theta = quad_task.theta_star + 100.0
        inputs, targets = quad_task.make_batch(Rng(4), 4)
        _, grad = quad_task.loss_and_grad(theta, Batch(inputs=inputs, targets=targets))
        assert np.max(np.abs(grad)) <= quad_task.grad_bound_Ginf

    @pytest.mark.unit
    @pytest.mark.parametrize("n, sizes", [(5, [2, 1, 1, 1]), (6, [2, 2, 1, 1]), (9, [3, 2, 2, 2])])
    def test_small_dimension_keeps_four_layers(self, n, sizes):
        task = quadratic_make(n, 10.0, 0)
        assert task.num_layers == 4
        assert [spec.param_count for spec in task.layers] == sizes

    @pytest.mark.unit
    def test_fewer_params_than_layers_rejected(self):
        with pytest.raises(ConfigError) as exc_info:
            QuadraticTask(n=3, cond=10.0, seed=0)
        assert exc_info.value.field_path == "task.n"

    @pytest.mark.unit
    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            QuadraticTask(n=1, cond=10.0, seed=0)
        with pytest.raises(ConfigError):
            QuadraticTask(n=4, cond=0.5, seed=0)


class TestQuadraticDomain:
    """默认半径下常规配置的轨迹不进入线性延拓区"""

    @staticmethod
    def assert_pure_quadratic(engine: EditEngine, rounds: int):
        task = engine.task
        widest = [0.0]

        def track(eng: EditEngine) -> None:
            for j in range(eng.mesh.N):
                widest[0] = max(widest[0], float(np.max(np.abs(eng.replica_params(j) - task.theta_star))))

        engine.on_step = track
        for _ in range(rounds):
            engine.run_round()
        assert widest[0] < task.domain_radius
        d = engine.mean_params() - task.theta_star
        assert task.loss(engine.mean_params()) == pytest.approx(0.5 * float(np.sum(task.eigenvalues * d * d)), rel=1e-12)

    @pytest.mark.unit
    def test_default_radius_shared_with_config(self):
        assert QuadraticTask(n=8, cond=10.0, seed=0).domain_radius == TaskConfig().domain_radius == 100.0

    @pytest.mark.unit
    def test_pure_quadratic_inside_radius(self, quad_task):
        theta = quad_task.theta_star + 50.0
        d = theta - quad_task.theta_star
        assert quad_task.loss(theta) == pytest.approx(0.5 * float(np.sum(quad_task.eigenvalues * d * d)), rel=1e-12)
        np.testing.assert_allclose(quad_task.full_grad(theta), quad_task.eigenvalues * d)

    @pytest.mark.integration
    @pytest.mark.parametrize("protocol", ["baseline", "post_local_sgd", "diloco", "edit"])
    def test_example_config_stays_inside(self, protocol):
        cfg = ExperimentConfig.load(CONFIGS / "quadratic_edit.json")
        self.assert_pure_quadratic(build_engine(cfg, seed=0, protocol=protocol), rounds=40)

    @pytest.mark.integration
    def test_theorem_setting_stays_inside(self):
        task = QuadraticTask(n=32, cond=10.0, seed=0, noise_std=0.5, noise_clip=1.0)
        engine = EditEngine(
            task=task,
            mesh=DeviceMesh(1, 4),
            sync_cfg=SyncConfig(tau=8, t_warm=0),
            inner=InnerSpec(kind="sgd"),
            outer=OuterSpec(kind="sgd", lr=1.0, momentum=0.0),
            schedule=LrSchedule(kind="inv_sqrt", base_lr=0.1),
            batch_size=4,
            seed=0,
        )
        self.assert_pure_quadratic(engine, rounds=40)


class TestMlpTask:
    """mlp 任务测试"""

    @pytest.mark.unit
    def test_param_layout(self, mlp_task):
        assert [spec.param_count for spec in mlp_task.layers] == [5 * 3 + 5, 2 * 5 + 2]
        assert mlp_task.param_dim == 32
        assert mlp_task.layers[-1].activation == "identity"

    @pytest.mark.unit
    def test_gradient_check_random_instances(self):
        """100 个随机网络，解析梯度与中心差分的相对误差 <= 1e-6"""
        for i in range(100):
            rng = Rng(i, (99,))
            depth = rng.integers(1, 4)
            dims = [rng.integers(1, 5)] + [rng.integers(2, 6) for _ in range(depth - 1)] + [rng.integers(1, 4)]
            task = MlpTask(dims, seed=i, val_size=8)
            theta = task.init_params(Rng(i, (7,)))
            inputs, targets = task.make_batch(Rng(i, (8,)), 4)
            batch = Batch(inputs=inputs, targets=targets)
            _, grad = task.loss_and_grad(theta, batch)
            assert relative_error(grad, central_difference(task, theta, batch)) <= 1e-6, dims

    @pytest.mark.unit
    def test_validation_loss_is_deterministic(self):
        a = MlpTask([3, 4, 2], seed=5, val_size=16)
        b = MlpTask([3, 4, 2], seed=5, val_size=16)
        theta = a.init_params(Rng(0))
        assert a.validation_loss(theta) == b.validation_loss(theta)

    @pytest.mark.unit
    def test_invalid_dims(self):
        with pytest.raises(ConfigError):
            MlpTask([3], seed=0)


class TestData:
    """数据分片测试"""

    @pytest.mark.unit
    def test_batch_is_function_of_worker_t_p(self, quad_task):
        a = sample_batch(make_shard(quad_task, 0, 1), t=3, p=2, batch_size=4)
        b = sample_batch(make_shard(quad_task, 0, 1), t=3, p=2, batch_size=4)
        c = sample_batch(make_shard(quad_task, 0, 2), t=3, p=2, batch_size=4)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert not np.array_equal(a.targets, c.targets)

    @pytest.mark.unit
    def test_corruption_scales_targets(self, quad_task):
        corruption = CorruptionSchedule(workers=frozenset({0}), factor=100.0, start_round=2, every=5)
        clean = sample_batch(make_shard(quad_task, 0, 0), t=7, p=0, batch_size=4)
        dirty = sample_batch(make_shard(quad_task, 0, 0, corruption), t=7, p=0, batch_size=4)
        np.testing.assert_array_equal(dirty.targets, clean.targets * 100.0)
        assert corruption.marks(0, 2, 0)
        assert not corruption.marks(0, 3, 0)
        assert not corruption.marks(1, 2, 0)

    @pytest.mark.unit
    def test_invalid_batch_size(self, quad_task):
        with pytest.raises(ValueError):
            sample_batch(make_shard(quad_task, 0, 0), 0, 0, 0)
