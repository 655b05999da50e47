"""
实验运行器

- 按 (协议, 场景, 种子) 展开矩阵，每个单元独立、单线程、确定性
- EDIT_SIM_THREADS 控制并发单元数；单元各写各的文件，汇总按矩阵顺序合并
- 单元失败记为 RunStatus.FAILED，矩阵继续
"""

import asyncio
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from ..config import ExperimentConfig, ScenarioConfig
from ..core import l2_norm
from ..errors import EditSimError
from ..hooks import HookRegistry, HookType
from ..logger import run_context
from ..protocol import RoundMetrics, build_engine
from ..protocol.engine import EditEngine
from ..timing import CostModel, Injector, TimedRound, TimedRun, plan_for_engine
from .metrics import MetricsRecord, MetricsWriter, read_metrics, summarize_records

logger = logging.getLogger(__name__)

THREADS_ENV = "EDIT_SIM_THREADS"


class RunStatus(Enum):
    """单元运行状态"""

    SUCCESS = "success"
    FAILED = "failed"


@dataclass
class Cell:
    """实验矩阵中的一个单元"""

    protocol: str
    scenario: ScenarioConfig
    seed: int

    @property
    def run_id(self) -> str:
        return f"{self.protocol}-{self.scenario.name}-s{self.seed}"


@dataclass
class RunOutcome:
    """单元运行结果"""

    run_id: str
    protocol: str
    scenario: str
    seed: int
    status: RunStatus
    message: str = ""
    metrics_path: Optional[str] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status is RunStatus.SUCCESS


@dataclass
class ExperimentResult:
    outcomes: List[RunOutcome]
    summary_path: Optional[Path] = None

    @property
    def failed(self) -> List[RunOutcome]:
        return [o for o in self.outcomes if not o.success]


def max_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"{THREADS_ENV}={raw!r} 不是整数，使用 1")
        return 1


def build_cells(cfg: ExperimentConfig) -> List[Cell]:
    return [
        Cell(protocol, scenario, seed)
        for protocol in cfg.protocols()
        for scenario in cfg.scenarios()
        for seed in cfg.seeds
    ]


def uses_clock(cfg: ExperimentConfig, protocol: str) -> bool:
    """a_edit 的步数由时钟决定，总是带计时运行"""
    return cfg.timing.enabled or protocol == "a_edit"


def make_record(
    cell: Cell,
    engine: EditEngine,
    numeric: RoundMetrics,
    timed: Optional[TimedRound] = None,
    batch_size: int = 1,
    final: bool = False,
) -> MetricsRecord:
    norms = [g for o in numeric.outcomes for g in o.norms if math.isfinite(g)]
    losses = [v for v in numeric.train_loss.values() if math.isfinite(v)]
    record = MetricsRecord(
        run_id=cell.run_id,
        seed=cell.seed,
        protocol=cell.protocol,
        scenario=cell.scenario.name,
        t=numeric.t,
        p=max(numeric.steps.values(), default=0),
        train_loss=dict(numeric.train_loss),
        train_loss_mean=sum(losses) / len(losses) if losses else math.nan,
        val_loss=numeric.val_loss,
        grad_norm=float(l2_norm(engine.task.full_grad(engine.replica_anchor(0)))),
        pseudo_norm_mean=sum(norms) / len(norms) if norms else math.nan,
        pseudo_norm_max=max(norms) if norms else math.nan,
        anomaly_count=numeric.anomaly_count,
        beta=numeric.min_beta,
        rollback=numeric.rollback,
        synced=numeric.synced,
        faulted=list(numeric.faulted),
        final=final,
    )
    if timed is not None and timed.wall > 0:
        K = engine.mesh.K
        samples = sum(timed.steps.values()) * engine.mesh.M * batch_size
        record.samples_per_sec = samples / timed.wall
        record.wait_fraction = sum(timed.sync_waits.values()) / (K * timed.wall)
    return record


def drive(
    cfg: ExperimentConfig,
    engine: EditEngine,
    protocol: str,
    injector_cfg,
    seed: int,
    rounds: int,
    on_round: Optional[Callable[[RoundMetrics, Optional[TimedRound]], None]] = None,
):
    """
    推进引擎 rounds 轮并做最后一次同步

    Returns:
        (最后一次同步的 RoundMetrics 或 None, TimedMetrics 或 None)
    """
    run = None
    if uses_clock(cfg, protocol):
        run = TimedRun(
            protocol=protocol,
            cost=CostModel.from_config(cfg.timing.cost),
            plan=plan_for_engine(engine, cfg.batch_size),
            injector=Injector.from_config(injector_cfg, engine.mesh.K, seed),
            tau=engine.cfg.tau,
            t_warm=engine.cfg.t_warm,
            policy_kind=cfg.timing.policy.kind,
            tau_time=cfg.timing.policy.tau_time if cfg.timing.enabled else None,
            engine=engine,
        )
    for _ in range(rounds):
        if run is not None:
            timed = run.run_round()
            numeric = run.numeric_rounds[-1]
        else:
            timed = None
            numeric = engine.run_round()
        if on_round is not None:
            on_round(numeric, timed)
    final = engine.finalize()
    return final, (run.finish() if run is not None else None)


def run_cell(cfg: ExperimentConfig, cell: Cell, out_dir: Path) -> RunOutcome:
    """运行一个单元；任何异常都转为 FAILED 结果"""
    metrics_path = out_dir / f"{cell.run_id}.jsonl"
    hooks = HookRegistry()
    with run_context(cell.run_id), MetricsWriter(metrics_path) as writer:
        writer.subscribe(hooks)
        try:
            hooks.dispatch(HookType.RUN_START, run_id=cell.run_id, protocol=cell.protocol, seed=cell.seed)
            logger.info(f"开始运行: {cell.run_id}")
            engine = build_engine(cfg, cell.seed, protocol=cell.protocol, hooks=hooks)

            def on_round(numeric: RoundMetrics, timed: Optional[TimedRound]) -> None:
                record = make_record(cell, engine, numeric, timed, cfg.batch_size)
                hooks.dispatch(HookType.ROUND_END, run_id=cell.run_id, record=record)

            final, timed_metrics = drive(cfg, engine, cell.protocol, cell.scenario.injector, cell.seed, cfg.rounds, on_round)
            if final is not None:
                record = make_record(cell, engine, final, final=True)
                hooks.dispatch(HookType.ROUND_END, run_id=cell.run_id, record=record)
        except Exception as e:
            level = logging.WARNING if isinstance(e, EditSimError) else logging.ERROR
            logger.log(level, f"运行失败: {cell.run_id}: {e}", exc_info=level == logging.ERROR)
            hooks.dispatch(HookType.RUN_FAILED, run_id=cell.run_id, error=str(e))
            return RunOutcome(
                run_id=cell.run_id,
                protocol=cell.protocol,
                scenario=cell.scenario.name,
                seed=cell.seed,
                status=RunStatus.FAILED,
                message=f"{type(e).__name__}: {e}",
                metrics_path=str(metrics_path),
            )

    summary = summarize_records(read_metrics(metrics_path))
    if timed_metrics is not None:
        summary["samples_per_sec"] = timed_metrics.steady_samples_per_sec
        summary["wait_bound_ok"] = timed_metrics.wait_bound_holds()
    hooks.dispatch(HookType.RUN_END, run_id=cell.run_id, summary=summary)
    logger.info(f"运行完成: {cell.run_id} final_val_loss={summary['final_val_loss']:.6g}")
    return RunOutcome(
        run_id=cell.run_id,
        protocol=cell.protocol,
        scenario=cell.scenario.name,
        seed=cell.seed,
        status=RunStatus.SUCCESS,
        metrics_path=str(metrics_path),
        summary=summary,
    )


async def run_matrix(cfg: ExperimentConfig, out_dir: Path, threads: Optional[int] = None) -> List[RunOutcome]:
    """并发运行所有单元，结果按矩阵顺序返回"""
    cells = build_cells(cfg)
    semaphore = asyncio.Semaphore(threads or max_threads())

    async def guarded(cell: Cell) -> RunOutcome:
        async with semaphore:
            return await asyncio.to_thread(run_cell, cfg, cell, out_dir)

    return list(await asyncio.gather(*(guarded(cell) for cell in cells)))


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    """运行实验矩阵并写出汇总 CSV"""
    from .report import write_summary

    out_dir = Path(cfg.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = build_cells(cfg)
    logger.info(f"实验 {cfg.name}: {len(cells)} 个单元 -> {out_dir}")
    outcomes = asyncio.run(run_matrix(cfg, out_dir, threads))
    summary_path = write_summary(outcomes, out_dir / cfg.output.summary_name)
    failed = [o.run_id for o in outcomes if not o.success]
    if failed:
        logger.warning(f"{len(failed)} 个单元失败: {', '.join(failed)}")
    return ExperimentResult(outcomes=outcomes, summary_path=summary_path)
