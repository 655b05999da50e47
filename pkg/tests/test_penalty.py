"""
伪梯度惩罚测试

- EMA 统计与异常判定
- 惩罚权重、裁剪
- 分层同步（含回滚）
"""

import math

import numpy as np
import pytest

from edit_sim.core import as_vector, l2_norm
from edit_sim.mesh import DeviceMesh
from edit_sim.optim import LrSchedule
from edit_sim.protocol import (
    EditEngine,
    EmaStat,
    InnerSpec,
    OuterSpec,
    SyncConfig,
    SyncStats,
    clip_coefficient,
    clip_pseudo,
    ema_update,
    is_anomaly,
    penalty_weights,
    sync_layer,
    uniform_weights,
)
from edit_sim.protocol.penalty import weight_ratio_bound


class TestEma:
    """EMA 统计测试"""

    @pytest.mark.unit
    def test_hand_evaluated_update(self):
        stats = SyncStats()
        stats.set(0, 1, EmaStat(mu=1.0, sigma=0.0, rounds_observed=3))
        stat = ema_update(stats, 0, 1, 2.0, alpha=0.02)
        assert stat.mu == pytest.approx(1.02)
        assert stat.sigma == pytest.approx(math.sqrt(0.02 * 0.98 ** 2))
        assert stat.sigma == pytest.approx(0.138593, abs=1e-6)
        assert stat.rounds_observed == 4

    @pytest.mark.unit
    def test_fixed_point(self):
        stats = SyncStats()
        stats.set(0, 1, EmaStat(mu=1.5, sigma=0.0, rounds_observed=2))
        stat = ema_update(stats, 0, 1, 1.5, alpha=0.3)
        assert stat.mu == 1.5
        assert stat.sigma == 0.0

    @pytest.mark.unit
    def test_constant_history_keeps_sigma_zero(self):
        stats = SyncStats()
        for _ in range(12):
            ema_update(stats, 0, 1, 1.5, alpha=0.3)
        stat = stats.get(0, 1)
        assert (stat.mu, stat.sigma) == (1.5, 0.0)
        # σ 精确为 0，微小扰动走 σ == 0 分支，不判为异常
        assert not is_anomaly(stats, 0, 1, 1.5 + 4e-15, SyncConfig(alpha=0.3))

    @pytest.mark.unit
    def test_infinite_norm_skipped(self):
        stats = SyncStats()
        stats.set(2, 3, EmaStat(mu=1.0, sigma=0.5, rounds_observed=7))
        stat = ema_update(stats, 2, 3, math.inf, alpha=0.02)
        assert (stat.mu, stat.sigma, stat.rounds_observed) == (1.0, 0.5, 7)

    @pytest.mark.unit
    def test_first_observation_seeds_mean(self):
        stats = SyncStats()
        stat = ema_update(stats, 0, 1, 4.0, alpha=0.02)
        assert (stat.mu, stat.sigma, stat.rounds_observed) == (4.0, 0.0, 1)

    @pytest.mark.unit
    def test_random_updates_match_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            mu, sigma = rng.uniform(0, 5), rng.uniform(0, 2)
            G, alpha = rng.uniform(0, 10), rng.uniform(0.001, 1.0)
            stats = SyncStats()
            stats.set(0, 1, EmaStat(mu=mu, sigma=sigma, rounds_observed=1))
            stat = ema_update(stats, 0, 1, G, alpha)
            expected_mu = alpha * G + (1 - alpha) * mu
            assert stat.mu == pytest.approx(expected_mu, rel=1e-12, abs=1e-13)
            assert stat.sigma == pytest.approx(
                math.sqrt((1 - alpha) * sigma ** 2 + alpha * (G - expected_mu) ** 2), rel=1e-12, abs=1e-13
            )

    @pytest.mark.unit
    def test_stats_keyed_per_worker_and_layer(self):
        stats = SyncStats()
        ema_update(stats, 0, 1, 1.0, 0.1)
        ema_update(stats, 0, 2, 5.0, 0.1)
        assert stats.get(0, 1).mu == 1.0
        assert stats.get(0, 2).mu == 5.0
        assert stats.get(1, 1).rounds_observed == 0


class TestIsAnomaly:
    """异常判定测试"""

    def _stats(self, observed: int) -> SyncStats:
        stats = SyncStats()
        stats.set(0, 1, EmaStat(mu=1.0, sigma=0.1, rounds_observed=observed))
        return stats

    @pytest.mark.unit
    def test_z_score_threshold(self):
        cfg = SyncConfig(delta=3.0)
        stats = self._stats(10)
        assert not is_anomaly(stats, 0, 1, 1.2, cfg)
        assert is_anomaly(stats, 0, 1, 1.4, cfg)

    @pytest.mark.unit
    def test_warmup_never_flags(self):
        cfg = SyncConfig(delta=3.0, ema_warmup_rounds=10)
        stats = self._stats(9)
        for G in (1.4, 100.0, math.inf):
            assert not is_anomaly(stats, 0, 1, G, cfg)

    @pytest.mark.unit
    def test_infinite_after_warmup(self):
        assert is_anomaly(self._stats(10), 0, 1, math.inf, SyncConfig())

    @pytest.mark.unit
    def test_zero_sigma_is_normal(self):
        stats = SyncStats()
        stats.set(0, 1, EmaStat(mu=1.0, sigma=0.0, rounds_observed=20))
        assert not is_anomaly(stats, 0, 1, 50.0, SyncConfig())


class TestPenaltyWeights:
    """惩罚权重测试"""

    @pytest.mark.unit
    def test_equal_norms(self):
        assert penalty_weights([3.0] * 4) == pytest.approx([0.25] * 4)

    @pytest.mark.unit
    def test_two_members(self):
        assert penalty_weights([1.0, 2.0]) == pytest.approx([0.73106, 0.26894], abs=1e-5)

    @pytest.mark.unit
    def test_infinite_member_gets_zero(self):
        assert penalty_weights([0.0, math.inf]) == [1.0, 0.0]

    @pytest.mark.unit
    def test_four_members_with_anomaly(self):
        weights = penalty_weights([1.0, 2.0, 3.0, math.inf])
        assert weights == pytest.approx([0.6652, 0.2447, 0.0900, 0.0], abs=1e-4)
        assert weights[3] == 0.0

    @pytest.mark.unit
    def test_all_infinite_signals_rollback(self):
        assert penalty_weights([math.inf, math.inf]) is None
        assert uniform_weights([math.inf]) is None

    @pytest.mark.unit
    def test_large_norms_stay_finite(self):
        weights = penalty_weights([1e4, 1e4 + 1.0])
        assert all(math.isfinite(w) for w in weights)
        assert sum(weights) == pytest.approx(1.0)

    @pytest.mark.unit
    def test_uniform_weights(self):
        assert uniform_weights([1.0, math.inf, 7.0]) == [0.5, 0.0, 0.5]

    @pytest.mark.unit
    def test_random_simplex(self):
        """随机范数下权重非负、和为 1，+inf 精确为 0"""
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            size = int(rng.integers(1, 9))
            norms = list(rng.exponential(5.0, size))
            for k in range(size):
                if rng.uniform() < 0.2:
                    norms[k] = math.inf
            weights = penalty_weights(norms)
            if all(math.isinf(g) for g in norms):
                assert weights is None
                continue
            assert all(w >= 0.0 for w in weights)
            assert abs(sum(weights) - 1.0) <= 1e-12
            for g, w in zip(norms, weights):
                if math.isinf(g):
                    assert w == 0.0

    @pytest.mark.unit
    def test_anomaly_ratio_bound(self):
        norms = [1.0, 1.5, 9.0]
        weights = penalty_weights(norms)
        ratio = weights[2] / max(weights)
        assert ratio <= weight_ratio_bound(9.0, 1.5) + 1e-15


class TestClip:
    """裁剪测试"""

    @pytest.mark.unit
    def test_under_threshold(self):
        cfg = SyncConfig(phi=10.0)
        delta = as_vector([3.0, 4.0])
        clipped, beta = clip_pseudo(delta, 5.0, cfg)
        assert beta == 1.0
        np.testing.assert_array_equal(clipped, delta)

    @pytest.mark.unit
    def test_over_threshold(self):
        cfg = SyncConfig(phi=10.0, eps=1e-6)
        delta = as_vector([12.0, 16.0])
        clipped, beta = clip_pseudo(delta, 20.0, cfg)
        assert beta == pytest.approx(0.5, rel=1e-6)
        assert l2_norm(clipped) == pytest.approx(10.0, rel=1e-6)
        assert l2_norm(clipped) < 10.0

    @pytest.mark.unit
    def test_zero_vector(self):
        clipped, beta = clip_pseudo(as_vector([0.0, 0.0]), 0.0, SyncConfig())
        assert beta == 1.0
        np.testing.assert_array_equal(clipped, [0.0, 0.0])

    @pytest.mark.unit
    def test_random_clip_bound(self):
        rng = np.random.default_rng(2)
        cfg = SyncConfig(phi=2.0)
        for _ in range(10_000):
            delta = rng.normal(0.0, rng.uniform(0.01, 10.0), int(rng.integers(1, 16)))
            G = l2_norm(delta)
            clipped, beta = clip_pseudo(delta, G, cfg)
            assert 0.0 < beta <= 1.0
            assert l2_norm(clipped) <= cfg.phi * G / (G + cfg.eps) * (1 + 1e-12)

    @pytest.mark.unit
    def test_coefficient(self):
        assert clip_coefficient(0.0, 1.0, 1e-6) == 1.0
        assert clip_coefficient(1e6, 1.0, 1e-6) == pytest.approx(1e-6)


class TestSyncConfig:
    """同步参数校验"""

    @pytest.mark.unit
    @pytest.mark.parametrize("kwargs", [{"tau": 0}, {"phi": 0.0}, {"eps": -1.0}, {"alpha": 0.0}, {"alpha": 1.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SyncConfig(**kwargs)

    @pytest.mark.unit
    def test_penalty_flags(self):
        off = SyncConfig(anomaly_elimination=False, weighted_averaging=False, gradient_clip=False)
        assert not off.penalty_enabled
        assert off.averaging == "uniform"
        assert SyncConfig().averaging == "penalty"


def _engine(task, mesh: DeviceMesh, **sync_kwargs) -> EditEngine:
    return EditEngine(
        task=task,
        mesh=mesh,
        sync_cfg=SyncConfig(tau=3, t_warm=0, **sync_kwargs),
        inner=InnerSpec(kind="adamw"),
        outer=OuterSpec(kind="nesterov", lr=0.8, momentum=0.85),
        schedule=LrSchedule(kind="constant", base_lr=0.05),
        batch_size=4,
        seed=0,
    )


class TestSyncLayer:
    """分层同步测试"""

    @pytest.mark.unit
    def test_all_faulted_rolls_back_exactly(self, quad_task, mesh_2x2):
        engine = _engine(quad_task, mesh_2x2)
        engine.run_round()
        anchors = {w: [a.copy() for a in ws.anchors] for w, ws in engine.workers.items()}
        momenta = {w: [o.buffer.copy() for o in ws.outer] for w, ws in engine.workers.items()}
        snap_steps = {w: [s.step for s in ws.inner_snapshot] for w, ws in engine.workers.items()}
        for ws in engine.workers.values():
            ws.faulted = True

        outcome = sync_layer(engine.mesh, engine.coll, engine.workers, engine.stats, engine.cfg, 1)

        assert outcome.rollback
        assert outcome.anomaly_count == engine.mesh.K
        assert outcome.weights == [0.0] * engine.mesh.K
        for w, ws in engine.workers.items():
            np.testing.assert_array_equal(ws.params[0], anchors[w][0])
            np.testing.assert_array_equal(ws.anchors[0], anchors[w][0])
            np.testing.assert_array_equal(ws.outer[0].buffer, momenta[w][0])
            assert ws.inner[0].step == snap_steps[w][0]
            # 第 2 层未同步，仍保留本地进度
            assert not np.array_equal(ws.params[1], anchors[w][1])

    @pytest.mark.unit
    def test_faulted_column_gets_zero_weight(self, quad_task):
        mesh = DeviceMesh(1, 2)
        engine = _engine(quad_task, mesh, phi=1e9)
        engine.run_round()
        delta_1 = engine.workers[1].params[0] - engine.workers[1].anchors[0]
        engine.workers[0].faulted = True

        outcome = sync_layer(mesh, engine.coll, engine.workers, engine.stats, engine.cfg, 1)

        assert not outcome.rollback
        assert outcome.weights == [0.0, 1.0]
        assert outcome.anomalies == [True, False]
        assert math.isinf(outcome.norms[0])
        assert outcome.G_bar == pytest.approx(l2_norm(delta_1))
        np.testing.assert_array_equal(engine.workers[0].anchors[0], engine.workers[1].anchors[0])
        np.testing.assert_array_equal(engine.workers[0].params[0], engine.workers[1].anchors[0])

    @pytest.mark.unit
    def test_rows_hold_identical_shards_after_sync(self, mlp_task, mesh_2x2):
        engine = _engine(mlp_task, mesh_2x2)
        engine.run_round()
        for layer in (1, 2):
            sync_layer(engine.mesh, engine.coll, engine.workers, engine.stats, engine.cfg, layer)
        for row in engine.mesh.rows():
            members = engine.mesh.members(row)
            for k in range(mlp_task.num_layers):
                first = engine.workers[members[0]]
                for w in members[1:]:
                    np.testing.assert_array_equal(engine.workers[w].anchors[k], first.anchors[k])
                    np.testing.assert_array_equal(engine.workers[w].params[k], first.params[k])

    @pytest.mark.unit
    def test_identical_deltas_clip_then_step(self, quad_task):
        """各成员 Δ 相同时 Δ̂ = Δ·min(φ/(‖Δ‖+ε), 1)"""
        mesh = DeviceMesh(1, 2)
        engine = EditEngine(
            task=quad_task,
            mesh=mesh,
            sync_cfg=SyncConfig(tau=1, t_warm=0, phi=0.01),
            inner=InnerSpec(kind="sgd"),
            outer=OuterSpec(kind="sgd", lr=1.0, momentum=0.0),
            schedule=LrSchedule(kind="constant", base_lr=0.1),
            batch_size=2,
            seed=0,
        )
        engine.run_round()
        anchor = engine.workers[0].anchors[0].copy()
        shift = as_vector(np.linspace(-1.0, 1.0, anchor.shape[0]))
        for ws in engine.workers.values():
            ws.params[0] = anchor + shift

        outcome = sync_layer(mesh, engine.coll, engine.workers, engine.stats, engine.cfg, 1)

        beta = min(0.01 / (l2_norm(shift) + 1e-6), 1.0)
        assert outcome.weights == pytest.approx([0.5, 0.5])
        assert outcome.beta == pytest.approx(beta)
        for ws in engine.workers.values():
            np.testing.assert_allclose(ws.anchors[0], anchor + beta * shift, rtol=0, atol=1e-12)
