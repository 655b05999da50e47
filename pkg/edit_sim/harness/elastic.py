"""
弹性链式运行

依次运行若干阶段，每个阶段在新的 (1, K) 网格上重新初始化，
继承上一阶段同步后的参数、外层动量与全局步号；学习率全程固定。
compare_chains 把同一组阶段按节点数升序与降序各跑一遍，对照 edit 与 baseline。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..config import ElasticPhase, ExperimentConfig
from ..core import Vector
from ..errors import CarryOverError, ConfigError
from ..mesh import DeviceMesh
from ..protocol import build_engine
from ..tasks import make_task
from .metrics import last_mean
from .runner import drive

logger = logging.getLogger(__name__)


@dataclass
class PhaseResult:
    workers: int
    rounds: int
    init_params: Vector = field(repr=False)
    final_params: Vector = field(repr=False)
    val_losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return last_mean(self.val_losses)


@dataclass
class ElasticResult:
    protocol: str
    seed: int
    phases: List[PhaseResult] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.phases[-1].final_loss if self.phases else math.nan


def _constant_lr(cfg: ExperimentConfig) -> ExperimentConfig:
    data = cfg.model_dump(mode="json")
    data["schedule"]["kind"] = "constant"
    return ExperimentConfig.from_dict(data)


def elastic_chain(
    cfg: ExperimentConfig,
    phases: Optional[Sequence[ElasticPhase]] = None,
    protocol: Optional[str] = None,
    seed: Optional[int] = None,
    init_params: Optional[Vector] = None,
) -> ElasticResult:
    """
    Args:
        init_params: 第一阶段的初始参数，缺省按种子初始化

    Raises:
        CarryOverError: 继承的参数形状与模型不一致
    """
    phases = list(cfg.elastic.phases if phases is None else phases)
    if not phases:
        raise ConfigError("至少需要一个阶段", "elastic.phases")
    protocol = protocol or cfg.protocol.name
    seed = cfg.seeds[0] if seed is None else seed
    cfg = _constant_lr(cfg)
    task = make_task(cfg.task, seed)
    tau = cfg.protocol.sync.tau

    result = ElasticResult(protocol=protocol, seed=seed)
    params: Optional[Vector] = init_params
    momentum: Optional[Vector] = None
    offset = 0
    for n, phase in enumerate(phases):
        if params is not None and params.shape != (task.param_dim,):
            raise CarryOverError(f"阶段 {n} 继承参数形状 {params.shape} 与模型 ({task.param_dim},) 不一致")
        rounds = math.ceil(phase.steps / tau)
        engine = build_engine(
            cfg,
            seed,
            protocol=protocol,
            task=task,
            mesh=DeviceMesh(1, phase.workers),
            init_params=params,
            init_momentum=momentum,
            step_offset=offset,
        )
        init = engine.replica_anchor(0)
        values: List[float] = []
        final, _ = drive(
            cfg,
            engine,
            protocol,
            cfg.timing.injector,
            seed,
            rounds,
            on_round=lambda numeric, timed: values.append(numeric.val_loss),
        )
        if final is not None:
            values.append(final.val_loss)
        params = engine.replica_anchor(0) if final is not None else engine.replica_params(0)
        momentum = engine.replica_momentum(0)
        offset = min(engine.column_steps.values())
        result.phases.append(
            PhaseResult(workers=phase.workers, rounds=rounds, init_params=init, final_params=params, val_losses=values)
        )
        logger.info(f"弹性阶段 {n}: K={phase.workers} rounds={rounds} loss={result.phases[-1].final_loss:.6g}")
    return result


@dataclass
class ChainComparison:
    """同一组阶段正向（节点数递增）与反向运行的对照"""

    # protocol -> 方向 ("up" | "down") -> 种子平均的最终验证损失
    final_losses: Dict[str, Dict[str, float]] = field(default_factory=dict)
    tolerance: float = 0.02

    def edit_ok(self, direction: str = "up") -> bool:
        """edit 不差于 baseline，或相差在 tolerance 以内"""
        edit = self.final_losses["edit"][direction]
        baseline = self.final_losses["baseline"][direction]
        return edit <= baseline * (1.0 + self.tolerance)

    def rows(self) -> List[dict]:
        return [
            {"protocol": protocol, "direction": direction, "final_loss": loss}
            for protocol, by_dir in self.final_losses.items()
            for direction, loss in by_dir.items()
        ]


def compare_chains(
    cfg: ExperimentConfig,
    phases: Optional[Sequence[ElasticPhase]] = None,
    protocols: Sequence[str] = ("baseline", "edit"),
    seeds: Optional[Sequence[int]] = None,
) -> ChainComparison:
    """
    按节点数升序与降序各跑一遍阶段链，对种子取平均

    趋势检查只发出警告，与学习率扫描一致。
    """
    phases = sorted(cfg.elastic.phases if phases is None else phases, key=lambda p: p.workers)
    seeds = list(cfg.seeds if seeds is None else seeds)
    comparison = ChainComparison()
    for protocol in protocols:
        comparison.final_losses[protocol] = {}
        for direction, ordered in (("up", phases), ("down", phases[::-1])):
            losses = [elastic_chain(cfg, ordered, protocol=protocol, seed=s).final_loss for s in seeds]
            comparison.final_losses[protocol][direction] = sum(losses) / len(losses)
    logger.info(f"弹性链对照: {comparison.final_losses}")
    if {"edit", "baseline"} <= set(comparison.final_losses):
        for direction in ("up", "down"):
            if not comparison.edit_ok(direction):
                logger.warning(f"{direction} 链上 edit 的最终损失高于 baseline 超过 {comparison.tolerance:.0%}")
    return comparison
