"""
计时调度

在模拟时钟上推进各协议：
- baseline（以及所有预热步）: 每步全局屏障 + 同步组梯度 all-reduce
- step 策略（post_local_sgd / diloco / edit）: 每列独立跑 τ 步，轮末屏障
- time 策略（a_edit）: 每列跑整步直到本轮已用时间 >= τ_time，轮末屏障
- co2_timing: step 策略，同步通信与下一轮计算完全重叠，只计超出部分

传入 engine 时每轮调用 engine.run_round 执行数值计算，
time 策略下各列步数由时钟决定。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

from ..errors import ProtocolError
from .clock import EventQueue, SimClock
from .cost import CostModel, LayerPlan, PlanCosts, plan_costs, step_cost, sync_layer_comm
from .injector import Injector

logger = logging.getLogger(__name__)

TIMED_PROTOCOLS = ("baseline", "post_local_sgd", "diloco", "edit", "a_edit", "co2_timing")

# 屏障等待与步长比较时的浮点容差
WAIT_TOLERANCE = 1e-9
# time 策略下单列单轮步数上限（相对 τ 的倍数）
MAX_STEPS_PER_TAU = 1000


def schedule_sync_overlap(comm: Sequence[float], forward: Sequence[float], overlap: str = "prefetch") -> float:
    """
    逐层同步的可见通信时间

    prefetch: 第 l 层的同步与第 l-1 层前向重叠，第 1 层总是完全可见
    none: 全部可见
    """
    if len(comm) != len(forward):
        raise ValueError(f"层数不一致: comm={len(comm)} forward={len(forward)}")
    if overlap == "none":
        return float(sum(comm))
    visible = 0.0
    for l, c in enumerate(comm):
        visible += c if l == 0 else max(0.0, c - forward[l - 1])
    return visible


def policy_for(protocol: str, policy_kind: str = "step") -> str:
    """协议对应的同步策略: sync / step / time"""
    if protocol not in TIMED_PROTOCOLS:
        raise ValueError(f"未知计时协议: {protocol}")
    if protocol == "baseline":
        return "sync"
    if protocol == "a_edit":
        return "time"
    if protocol == "co2_timing":
        return "step"
    return policy_kind


@dataclass
class TimedRound:
    """一轮的计时结果"""

    t: int
    steps: Dict[int, int]
    # 轮末屏障处各节点等待时间
    sync_waits: Dict[int, float]
    # 本轮观测到的最长单步（列步长，含滞后）
    max_step: float
    # 本轮开始时可见的同步通信时间
    sync_visible: float
    # 本轮是否包含预热步
    warmup: bool
    start: float
    end: float

    @property
    def wall(self) -> float:
        return self.end - self.start

    @property
    def max_wait(self) -> float:
        return max(self.sync_waits.values(), default=0.0)


@dataclass
class TimedMetrics:
    protocol: str
    policy: str
    plan: LayerPlan
    rounds: List[TimedRound] = field(default_factory=list)
    # 各阶段总耗时（所有节点累加）
    ledger: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    def samples(self, rounds: Optional[Sequence[TimedRound]] = None) -> int:
        rounds = self.rounds if rounds is None else rounds
        per_step = self.plan.M * self.plan.batch_size
        return sum(sum(r.steps.values()) * per_step for r in rounds)

    @property
    def samples_per_sec(self) -> float:
        return self.samples() / self.wall_time if self.wall_time > 0 else math.inf

    @property
    def steady_samples_per_sec(self) -> float:
        """去掉含预热步的轮次后的吞吐；全是预热轮时退化为整体吞吐"""
        steady = [r for r in self.rounds if not r.warmup]
        if not steady:
            return self.samples_per_sec
        wall = sum(r.wall for r in steady)
        return self.samples(steady) / wall if wall > 0 else math.inf

    def wait_bound_holds(self) -> bool:
        """非预热轮的屏障等待不超过该轮最长单步"""
        return all(r.max_wait <= r.max_step + WAIT_TOLERANCE for r in self.rounds if not r.warmup)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "policy": self.policy,
            "rounds": len(self.rounds),
            "samples": self.samples(),
            "wall_time": self.wall_time,
            "samples_per_sec": self.samples_per_sec,
            "steady_samples_per_sec": self.steady_samples_per_sec,
            "ledger": dict(self.ledger),
            "max_wait": max((r.max_wait for r in self.rounds), default=0.0),
        }


class TimedRun:
    """在模拟时钟上推进一个协议"""

    def __init__(
        self,
        protocol: str,
        cost: CostModel,
        plan: LayerPlan,
        injector: Injector,
        tau: int = 128,
        t_warm: float = 0,
        policy_kind: str = "step",
        tau_time: Optional[float] = 600.0,
        engine=None,
    ):
        self.protocol = protocol
        self.policy = policy_for(protocol, policy_kind)
        self.cost = cost
        self.plan = plan
        self.injector = injector
        self.tau = tau
        self.t_warm = math.inf if self.policy == "sync" else t_warm
        self.engine = engine
        if engine is not None and (engine.mesh.M, engine.mesh.N) != (plan.M, plan.N):
            raise ValueError(f"计时网格 {plan.M}x{plan.N} 与引擎网格 {engine.mesh.M}x{engine.mesh.N} 不一致")

        self.costs: PlanCosts = plan_costs(cost, plan)
        nominal = self.costs.compute + self.costs.shard_comm
        # 未给出时间阈值时取无扰动下 τ 步的时长
        self.tau_time = tau_time if tau_time is not None else tau * nominal
        if self.policy == "time" and self.tau_time <= 0:
            raise ValueError(f"时间阈值必须为正: {self.tau_time}")
        self.max_local_steps = MAX_STEPS_PER_TAU * tau
        self.clock = SimClock(plan.K)
        self.column_steps: Dict[int, int] = {j: 0 for j in range(plan.N)}
        self.t = 0
        self.metrics = TimedMetrics(protocol=protocol, policy=self.policy, plan=plan)
        self.numeric_rounds: list = []

    # ==================== 工具 ====================

    def members(self, j: int) -> List[int]:
        return [i * self.plan.N + j for i in range(self.plan.M)]

    def in_warmup(self, step: int) -> bool:
        return step <= self.t_warm

    def _column_step(self, j: int, t: int, p: int) -> float:
        """列 j 执行一步：成员锁步，列内等待记为 wait；返回列步长"""
        members = self.members(j)
        costs = {w: step_cost(w, self.costs, self.injector, t, p, warmup=False) for w in members}
        duration = max(c.compute + c.shard_comm for c in costs.values())
        for w, c in costs.items():
            self.clock.charge(w, "compute", c.compute)
            self.clock.charge(w, "shard_comm", c.shard_comm)
            self.clock.charge(w, "wait", duration - (c.compute + c.shard_comm))
        self.column_steps[j] += 1
        return duration

    def _sync_visible(self) -> float:
        comm = sync_layer_comm(self.cost, self.costs, self.injector.inter_factor())
        if self.protocol == "co2_timing":
            return 0.0
        return schedule_sync_overlap(comm, self.costs.forward, self.cost.overlap)

    # ==================== 推进 ====================

    def run_round(self) -> TimedRound:
        K = self.plan.K
        start = max(self.clock.elapsed(w) for w in range(K))
        round_start = min(self.column_steps.values())
        warm_round = self.in_warmup(round_start)
        sync_due = self.t >= 1 and not warm_round and self.policy != "sync"

        sync_visible = self._sync_visible() if sync_due else 0.0
        if sync_visible > 0:
            for w in range(K):
                self.clock.charge(w, "sync_comm", sync_visible)

        if warm_round:
            counts, max_step = self._lockstep_round()
        else:
            counts, max_step = self._local_round(start)

        if self.protocol == "co2_timing" and sync_due:
            comm = sync_layer_comm(self.cost, self.costs, self.injector.inter_factor())
            local = min(self.clock.elapsed(w) for w in range(K)) - start
            hidden_excess = max(0.0, sum(comm) - local)
            for w in range(K):
                self.clock.charge(w, "sync_comm", hidden_excess)

        waits = self.clock.barrier(range(K))
        end = max(self.clock.elapsed(w) for w in range(K))

        if self.engine is not None:
            numeric = self.engine.run_round(counts if self.policy == "time" else None)
            self.numeric_rounds.append(numeric)

        record = TimedRound(
            t=self.t,
            steps=counts,
            sync_waits=waits,
            max_step=max_step,
            sync_visible=sync_visible,
            warmup=warm_round,
            start=start,
            end=end,
        )
        self.metrics.rounds.append(record)
        self.t += 1
        return record

    def _lockstep_round(self):
        """含预热步的轮次：τ 步锁步，预热步全局屏障 + 组内 all-reduce"""
        K = self.plan.K
        max_step = 0.0
        row_comm = self.injector.inter_factor() * sum(self.costs.row_allreduce)
        for p in range(self.tau):
            step = min(self.column_steps.values())
            for j in range(self.plan.N):
                max_step = max(max_step, self._column_step(j, self.t, p))
            if self.in_warmup(step):
                self.clock.barrier(range(K))
                for w in range(K):
                    self.clock.charge(w, "sync_comm", row_comm)
        return {j: self.tau for j in range(self.plan.N)}, max_step

    def _local_round(self, start: float):
        """本地轮：事件队列按完成时间推进各列"""
        counts = {j: 0 for j in range(self.plan.N)}
        max_step = 0.0
        queue = EventQueue()
        for j in range(self.plan.N):
            queue.push(self.clock.elapsed(self.members(j)[0]), j)
        while len(queue):
            event = queue.pop()
            j = event.column
            duration = self._column_step(j, self.t, counts[j])
            counts[j] += 1
            max_step = max(max_step, duration)
            finish = self.clock.elapsed(self.members(j)[0])
            if self._round_done(counts[j], finish - start):
                continue
            if counts[j] >= self.max_local_steps:
                raise ProtocolError(
                    f"列 {j} 本轮已执行 {counts[j]} 步仍未达到时间阈值 {self.tau_time:.4g}s，检查 tau_time 与成本模型"
                )
            queue.push(finish, j)
        return counts, max_step

    def _round_done(self, steps: int, elapsed: float) -> bool:
        if self.policy == "time":
            return elapsed >= self.tau_time * (1.0 - WAIT_TOLERANCE)
        return steps >= self.tau

    def finish(self) -> TimedMetrics:
        """汇总账本并返回计时指标"""
        self.metrics.ledger = self.clock.totals()
        self.metrics.wall_time = self.clock.wall_time()
        logger.debug(
            f"计时完成: {self.protocol} rounds={len(self.metrics.rounds)} "
            f"throughput={self.metrics.steady_samples_per_sec:.4g} samples/s"
        )
        return self.metrics

    def run(self, rounds: int, on_round: Optional[Callable[[TimedRound], None]] = None) -> TimedMetrics:
        for _ in range(rounds):
            record = self.run_round()
            if on_round is not None:
                on_round(record)
        return self.finish()


def run_timed(
    protocol: str,
    cost: CostModel,
    plan: LayerPlan,
    injector: Injector,
    rounds: int,
    tau: int = 128,
    t_warm: float = 0,
    policy_kind: str = "step",
    tau_time: Optional[float] = 600.0,
    engine=None,
) -> TimedMetrics:
    """按协议推进 rounds 轮并返回计时指标"""
    run = TimedRun(protocol, cost, plan, injector, tau, t_warm, policy_kind, tau_time, engine)
    return run.run(rounds)


def plan_for_engine(engine, batch_size: int) -> LayerPlan:
    """数值引擎对应的计时规模"""
    sizes = tuple(float(layer.param_count) for layer in engine.task.layers)
    return LayerPlan(sizes, engine.mesh.M, engine.mesh.N, batch_size)
