"""
EDiT 训练引擎

单线程、确定性地执行分层训练循环：
- 每步逐层 all-gather 参数 → 前向；反向时再次 all-gather → 反向 → reduce-scatter 均值
- 全局步号 <= t_warm 时，在同步组内对梯度分片做 all-reduce（预热 = 同步训练）
- 预热结束后，每轮第 0 步在每层前向之前做该层的伪梯度同步
- 每个分片组（列）是一份模型副本，列内成员每步锁步；
  时间策略下各列本轮的内层步数可以不同
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..core import Rng, Vector
from ..errors import DimensionError, NumericError
from ..hooks import HookRegistry, HookType
from ..mesh import Collectives, DeviceMesh, build_shard_spec, shard_layer, unshard_layer
from ..optim import LrSchedule, inner_step, lr_at_step, make_inner_state
from ..optim.outer import OuterOptState
from ..tasks import CorruptionSchedule, LayeredTask, make_shard, sample_batch
from .penalty import PenaltyOutcome, SyncConfig, SyncStats
from .sync import sync_layer
from .worker import WorkerState

logger = logging.getLogger(__name__)

# 初始参数使用的子流编号
INIT_STREAM = 0


@dataclass
class InnerSpec:
    kind: str = "sgd"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class OuterSpec:
    kind: str = "sgd"
    lr: float = 1.0
    momentum: float = 0.0


@dataclass
class RoundMetrics:
    """一轮的数值结果"""

    t: int
    # 各列本轮内层步数
    steps: Dict[int, int]
    # 各节点本轮平均训练损失
    train_loss: Dict[int, float]
    # 同步后锚点上的验证损失
    val_loss: float
    synced: bool
    outcomes: List[PenaltyOutcome] = field(default_factory=list)
    faulted: List[int] = field(default_factory=list)
    # 本轮观测到的最大单坐标梯度
    grad_inf_max: float = 0.0

    @property
    def anomaly_count(self) -> int:
        return sum(o.anomaly_count for o in self.outcomes)

    @property
    def rollback(self) -> bool:
        return any(o.rollback for o in self.outcomes)

    @property
    def min_beta(self) -> float:
        return min((o.beta for o in self.outcomes), default=1.0)


StepCallback = Callable[["EditEngine"], None]


class EditEngine:
    """
    分片 Local-SGD 引擎

    Args:
        task: 分层任务
        mesh: 设备网格
        sync_cfg: 同步与惩罚参数
        inner / outer: 优化器设置
        schedule: 内层学习率调度
        batch_size: 每节点批大小
        seed: 运行种子（初始化与数据）
        corruption: 目标损坏计划
        hooks: 事件钩子
        init_params: 指定初始参数（弹性链式运行时传入上一阶段结果）
        init_momentum: 指定初始外层动量（完整向量）
        step_offset: 全局步号起点（用于学习率调度）
    """

    def __init__(
        self,
        task: LayeredTask,
        mesh: DeviceMesh,
        sync_cfg: SyncConfig,
        inner: InnerSpec,
        outer: OuterSpec,
        schedule: LrSchedule,
        batch_size: int,
        seed: int,
        corruption: Optional[CorruptionSchedule] = None,
        hooks: Optional[HookRegistry] = None,
        init_params: Optional[Vector] = None,
        init_momentum: Optional[Vector] = None,
        step_offset: int = 0,
    ):
        self.task = task
        self.mesh = mesh
        self.cfg = sync_cfg
        self.schedule = schedule
        self.batch_size = batch_size
        self.seed = seed
        self.hooks = hooks or HookRegistry()
        self.coll = Collectives(mesh)
        self.stats = SyncStats()
        self.spec = build_shard_spec([l.param_count for l in task.layers], mesh.M)
        self.t = 0
        # 各列已完成的全局步数
        self.column_steps: Dict[int, int] = {j: step_offset for j in range(mesh.N)}
        self.step_offset = step_offset
        self.on_step: Optional[StepCallback] = None

        theta0 = init_params if init_params is not None else task.init_params(Rng(seed, (INIT_STREAM,)))
        if theta0.shape[0] != task.param_dim:
            raise DimensionError(f"初始参数长度 {theta0.shape[0]} != {task.param_dim}")
        layer_shards = [shard_layer(p, mesh.M, l + 1)[0] for l, p in enumerate(task.split_layers(theta0))]
        momentum_shards = None
        if init_momentum is not None:
            momentum_shards = [shard_layer(m, mesh.M, l + 1)[0] for l, m in enumerate(task.split_layers(init_momentum))]

        self.workers: Dict[int, WorkerState] = {}
        for w in range(mesh.K):
            i, j = mesh.coords(w)
            params = [shards[i].copy() for shards in layer_shards]
            self.workers[w] = WorkerState(
                worker_id=w,
                i=i,
                j=j,
                params=params,
                anchors=[p.copy() for p in params],
                inner=[
                    make_inner_state(inner.kind, p.shape[0], tuple(inner.betas), inner.eps, inner.weight_decay)
                    for p in params
                ],
                outer=[
                    OuterOptState(
                        kind=outer.kind,
                        length=p.shape[0],
                        lr=outer.lr,
                        momentum=outer.momentum,
                        buffer=None if momentum_shards is None else momentum_shards[l][i].copy(),
                    )
                    for l, p in enumerate(params)
                ],
                data=make_shard(task, seed, w, corruption),
            )
            self.workers[w].snapshot_inner()
        logger.debug(
            f"引擎初始化: mesh={mesh.M}x{mesh.N} layers={task.num_layers} "
            f"param_dim={task.param_dim} tau={sync_cfg.tau} t_warm={sync_cfg.t_warm}"
        )

    # ==================== 状态查询 ====================

    def column_members(self, j: int) -> List[int]:
        return self.mesh.col(j)

    def replica_params(self, j: int) -> Vector:
        """第 j 列（一份副本）的完整参数"""
        members = self.mesh.col(j)
        return np.concatenate(
            [
                unshard_layer([self.workers[w].params[l] for w in members], self.spec.layer(l + 1))
                for l in range(self.task.num_layers)
            ]
        )

    def replica_anchor(self, j: int = 0) -> Vector:
        members = self.mesh.col(j)
        return np.concatenate(
            [
                unshard_layer([self.workers[w].anchors[l] for w in members], self.spec.layer(l + 1))
                for l in range(self.task.num_layers)
            ]
        )

    def replica_momentum(self, j: int = 0) -> Vector:
        members = self.mesh.col(j)
        return np.concatenate(
            [
                unshard_layer([self.workers[w].outer[l].buffer for w in members], self.spec.layer(l + 1))
                for l in range(self.task.num_layers)
            ]
        )

    def mean_params(self) -> Vector:
        """各副本参数的平均 θ̄_{t,p}"""
        return sum(self.replica_params(j) for j in range(self.mesh.N)) / self.mesh.N

    def in_warmup(self, step: int) -> bool:
        return step <= self.cfg.t_warm

    def sync_due(self) -> bool:
        """本轮开始时是否需要同步（预热结束后的每轮）"""
        return self.t >= 1 and not self.in_warmup(min(self.column_steps.values()))

    # ==================== 训练 ====================

    def run_round(self, steps_per_column: Optional[Mapping[int, int]] = None) -> RoundMetrics:
        """
        执行一轮 t

        Args:
            steps_per_column: 各列本轮内层步数，缺省为 τ；预热阶段强制为 τ
        """
        tau = self.cfg.tau
        due = self.sync_due()
        round_start = min(self.column_steps.values())
        if steps_per_column is None or self.in_warmup(round_start):
            counts = {j: tau for j in range(self.mesh.N)}
        else:
            counts = {j: int(steps_per_column[j]) for j in range(self.mesh.N)}
            if any(c < 1 for c in counts.values()):
                raise ValueError(f"每列至少执行一步: {counts}")

        if not due:
            for ws in self.workers.values():
                ws.snapshot_anchors()
                ws.faulted = False

        losses: Dict[int, List[float]] = {w: [] for w in self.workers}
        outcomes: List[PenaltyOutcome] = []
        grad_inf = 0.0
        for p in range(max(counts.values())):
            active = [j for j in range(self.mesh.N) if p < counts[j]]
            step_outcomes, step_losses, step_ginf = self._step(p, active, sync_first=(due and p == 0))
            outcomes.extend(step_outcomes)
            for w, loss in step_losses.items():
                losses[w].append(loss)
            grad_inf = max(grad_inf, step_ginf)
            if self.on_step is not None:
                self.on_step(self)

        faulted = sorted(w for w, ws in self.workers.items() if ws.faulted)
        metrics = RoundMetrics(
            t=self.t,
            steps=counts,
            train_loss={w: float(np.mean(v)) if v else math.nan for w, v in losses.items()},
            val_loss=self.task.validation_loss(self.replica_anchor(0)),
            synced=due,
            outcomes=outcomes,
            faulted=faulted,
            grad_inf_max=grad_inf,
        )
        self._dispatch_sync(metrics)
        self.t += 1
        return metrics

    def finalize(self) -> Optional[RoundMetrics]:
        """训练结束时做最后一次同步，使各副本参数一致"""
        if not self.sync_due():
            return None
        outcomes = [self._sync(l) for l in range(1, self.task.num_layers + 1)]
        for ws in self.workers.values():
            ws.faulted = False
        metrics = RoundMetrics(
            t=self.t,
            steps={j: 0 for j in range(self.mesh.N)},
            train_loss={},
            val_loss=self.task.validation_loss(self.replica_anchor(0)),
            synced=True,
            outcomes=outcomes,
        )
        self._dispatch_sync(metrics)
        return metrics

    def _sync(self, layer: int) -> PenaltyOutcome:
        return sync_layer(self.mesh, self.coll, self.workers, self.stats, self.cfg, layer)

    def _dispatch_sync(self, metrics: RoundMetrics) -> None:
        if not metrics.synced:
            return
        self.hooks.dispatch(HookType.SYNC, t=metrics.t, outcomes=metrics.outcomes)
        if metrics.anomaly_count:
            self.hooks.dispatch(HookType.ANOMALY, t=metrics.t, count=metrics.anomaly_count)
        if metrics.rollback:
            self.hooks.dispatch(HookType.ROLLBACK, t=metrics.t)

    def _step(self, p: int, active: Sequence[int], sync_first: bool):
        task = self.task
        outcomes: List[PenaltyOutcome] = []
        members = {j: self.mesh.col(j) for j in active}
        step_of = {j: self.column_steps[j] for j in active}

        batches = {}
        activations = {}
        ctxs: Dict[int, list] = {}
        for j in active:
            for w in members[j]:
                ws = self.workers[w]
                ws.t, ws.p = self.t, p
                batches[w] = sample_batch(ws.data, self.t, p, self.batch_size)
                activations[w] = task.begin(batches[w])
                ctxs[w] = []

        # 前向：第 0 步先同步该层
        for spec in task.layers:
            l = spec.index
            if sync_first:
                outcomes.append(self._sync(l))
                if l == task.num_layers:
                    for ws in self.workers.values():
                        ws.faulted = False
            for j in active:
                col = self.mesh.cols()[j]
                gathered = self.coll.all_gather(
                    {w: self.workers[w].params[l - 1] for w in members[j]}, col, self.spec.layer(l)
                )
                for w in members[j]:
                    activations[w], ctx = task.forward_layer(l, gathered[w], activations[w])
                    ctxs[w].append(ctx)

        losses: Dict[int, float] = {}
        grad_out = {}
        for w in batches:
            losses[w], grad_out[w] = task.loss_from_output(activations[w], batches[w], ctxs[w])

        # 反向
        grad_shards: Dict[int, List[Optional[Vector]]] = {w: [None] * task.num_layers for w in batches}
        for spec in reversed(task.layers):
            l = spec.index
            for j in active:
                col = self.mesh.cols()[j]
                gathered = self.coll.all_gather(
                    {w: self.workers[w].params[l - 1] for w in members[j]}, col, self.spec.layer(l)
                )
                full_grads = {}
                for w in members[j]:
                    full_grads[w], grad_out[w] = task.backward_layer(l, gathered[w], ctxs[w][l - 1], grad_out[w])
                shards = self.coll.reduce_scatter_mean(full_grads, col, self.spec.layer(l))
                for w in members[j]:
                    grad_shards[w][l - 1] = shards[w]
            # 预热期间同步组内 all-reduce 梯度
            warm = len(active) == self.mesh.N and all(self.in_warmup(s) for s in step_of.values())
            for row in self.mesh.rows() if warm else []:
                row_members = self.mesh.members(row)
                reduced = self.coll.all_reduce_mean({w: grad_shards[w][l - 1] for w in row_members}, row)
                for w in row_members:
                    grad_shards[w][l - 1] = reduced[w]

        # 内层更新
        grad_inf = 0.0
        for j in active:
            lr = lr_at_step(self.schedule, step_of[j])
            for w in members[j]:
                ws = self.workers[w]
                if not math.isfinite(losses[w]):
                    ws.faulted = True
                for k in range(task.num_layers):
                    g = grad_shards[w][k]
                    try:
                        ws.params[k] = inner_step(ws.inner[k], ws.params[k], g, lr)
                        grad_inf = max(grad_inf, float(np.max(np.abs(g))) if g.size else 0.0)
                    except NumericError:
                        if not ws.faulted:
                            logger.warning(f"节点 {w} 在 t={self.t} p={p} 出现非有限梯度，跳过本步更新")
                        ws.faulted = True
            self.column_steps[j] += 1

        return outcomes, losses, grad_inf
