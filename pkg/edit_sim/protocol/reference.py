"""
不分片的直线参考实现

每份副本持有完整参数，逐步显式循环。仅用于校验分片引擎的数值结果，
不做任何集合通信，也不处理非有限梯度。
"""

import math
from typing import Dict, List, Optional

import numpy as np

from ..core import Rng, Vector
from ..optim import LrSchedule, inner_step, lr_at_step, make_inner_state
from ..optim.outer import OuterOptState, outer_step
from ..tasks import CorruptionSchedule, LayeredTask, make_shard, sample_batch
from .engine import INIT_STREAM, InnerSpec, OuterSpec
from .penalty import (
    SyncConfig,
    SyncStats,
    clip_coefficient,
    ema_update,
    is_anomaly,
    penalty_weights,
    uniform_weights,
)


def _norm(x: Vector) -> float:
    total = 0.0
    for v in x:
        total += float(v) * float(v)
    return math.sqrt(total)


def reference_run(
    task: LayeredTask,
    M: int,
    N: int,
    cfg: SyncConfig,
    inner: InnerSpec,
    outer: OuterSpec,
    schedule: LrSchedule,
    batch_size: int,
    seed: int,
    rounds: int,
    corruption: Optional[CorruptionSchedule] = None,
    finalize: bool = True,
) -> List[Vector]:
    """返回各副本最终的完整参数"""
    theta0 = task.init_params(Rng(seed, (INIT_STREAM,)))
    slices = [task.layer_slice(spec.index) for spec in task.layers]
    replicas = [theta0.copy() for _ in range(N)]
    anchors = [theta0.copy() for _ in range(N)]
    inner_states = [
        [make_inner_state(inner.kind, s.stop - s.start, tuple(inner.betas), inner.eps, inner.weight_decay) for s in slices]
        for _ in range(N)
    ]
    snapshots = [[s.clone() for s in states] for states in inner_states]
    outer_states = [
        [OuterOptState(kind=outer.kind, length=s.stop - s.start, lr=outer.lr, momentum=outer.momentum) for s in slices]
        for _ in range(N)
    ]
    shards = [[make_shard(task, seed, i * N + j, corruption) for i in range(M)] for j in range(N)]
    stats = SyncStats()
    steps = 0

    def sync_all() -> None:
        for l, sl in enumerate(slices, start=1):
            deltas = [replicas[j][sl] - anchors[j][sl] for j in range(N)]
            norms: List[float] = []
            for j in range(N):
                G = _norm(deltas[j])
                if cfg.anomaly_elimination and is_anomaly(stats, j, l, G, cfg):
                    G = math.inf
                ema_update(stats, j, l, G, cfg.alpha)
                norms.append(G)
            weights = penalty_weights(norms) if cfg.weighted_averaging else uniform_weights(norms)
            if weights is None:
                for j in range(N):
                    replicas[j][sl] = anchors[j][sl]
                    inner_states[j][l - 1] = snapshots[j][l - 1].clone()
                continue
            delta_bar = np.zeros(sl.stop - sl.start)
            for j in range(N):
                delta_bar = delta_bar + weights[j] * deltas[j]
            beta = clip_coefficient(_norm(delta_bar), cfg.phi, cfg.eps) if cfg.gradient_clip else 1.0
            for j in range(N):
                anchors[j][sl] = outer_step(outer_states[j][l - 1], anchors[j][sl], beta * delta_bar)
                replicas[j][sl] = anchors[j][sl]
                snapshots[j][l - 1] = inner_states[j][l - 1].clone()

    for t in range(rounds):
        if t >= 1 and steps > cfg.t_warm:
            sync_all()
        else:
            for j in range(N):
                anchors[j] = replicas[j].copy()
                snapshots[j] = [s.clone() for s in inner_states[j]]
        for p in range(cfg.tau):
            grads: Dict[int, Vector] = {}
            for j in range(N):
                total = np.zeros(task.param_dim)
                for i in range(M):
                    batch = sample_batch(shards[j][i], t, p, batch_size)
                    total = total + task.loss_and_grad(replicas[j], batch)[1]
                grads[j] = total / M
            if steps <= cfg.t_warm:
                mean = np.zeros(task.param_dim)
                for j in range(N):
                    mean = mean + grads[j]
                mean = mean / N
                grads = {j: mean for j in range(N)}
            lr = lr_at_step(schedule, steps)
            for j in range(N):
                for l, sl in enumerate(slices):
                    replicas[j][sl] = inner_step(inner_states[j][l], replicas[j][sl], grads[j][sl], lr)
            steps += 1

    if finalize and rounds >= 1 and steps > cfg.t_warm:
        sync_all()
    return replicas
