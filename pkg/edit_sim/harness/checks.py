"""
验收检查（run --check）

- determinism: 同一配置与种子运行两次，指标文件逐字节一致
- theorem: 二次型上的收敛界与经验下降
- spike: 注入目标损坏时，完整惩罚压住验证损失尖峰，关闭惩罚则出现尖峰
- wait_bound: a_edit 在异构节点下的屏障等待不超过单步时长
- straggler: 标定后的计时模型复现吞吐保持率
"""

import filecmp
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from ..config import ExperimentConfig
from ..protocol import build_engine, theorem_check
from ..timing import (
    CostModel,
    Injector,
    LayerPlan,
    calibrate,
    normalize,
    run_timed,
    retention_table,
)
from .runner import Cell, build_cells, run_cell

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CheckReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, result: CheckResult) -> None:
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"检查 {result.name}: {'通过' if result.passed else '失败'} {result.detail}")
        self.results.append(result)


def determinism_check(cfg: ExperimentConfig) -> CheckResult:
    cell = build_cells(cfg)[0]
    with tempfile.TemporaryDirectory() as tmp:
        first = run_cell(cfg, cell, Path(tmp) / "a")
        second = run_cell(cfg, cell, Path(tmp) / "b")
        if not (first.success and second.success):
            return CheckResult("determinism", False, first.message or second.message)
        same = filecmp.cmp(first.metrics_path, second.metrics_path, shallow=False)
    return CheckResult("determinism", same, cell.run_id)


def theorem_acceptance(seeds: Sequence[int] = tuple(range(10)), checkpoints: Sequence[int] = (500, 2000)) -> CheckResult:
    result = theorem_check(seeds=seeds, checkpoints=checkpoints)
    detail = ", ".join(f"T={T}: {result.mean_min_grad_sq[T]:.4g} <= {result.bounds[T]:.4g}" for T in sorted(result.bounds))
    return CheckResult("theorem", result.passed, detail)


def spike_config(ablation: str = "full", corrupted: bool = True, rounds: int = 30, seed: int = 0) -> ExperimentConfig:
    """mlp、8 个节点、节点 0 在 EMA 预热后每 5 轮目标放大 100 倍"""
    return ExperimentConfig.from_dict(
        {
            "name": "spike",
            "task": {
                "kind": "mlp",
                "noise_std": 0.1,
                "noise_clip": 0.5,
                "corruption": {
                    "workers": [0] if corrupted else [],
                    "factor": 100.0 if corrupted else 1.0,
                    "start_round": 12,
                    "every": 5,
                },
            },
            "mesh": {"M": 1, "N": 8},
            "protocol": {"name": "edit", "sync": {"tau": 4, "t_warm": 0}, "ablation": {"preset": ablation}},
            "inner": {"kind": "sgd", "lr": 0.05},
            "outer": {"kind": "sgd", "lr": 1.0, "momentum": 0.0},
            "schedule": {"kind": "constant"},
            "rounds": rounds,
            "batch_size": 8,
            "seeds": [seed],
        }
    )


def synced_val_losses(cfg: ExperimentConfig) -> Dict[int, float]:
    """每个同步轮的验证损失"""
    engine = build_engine(cfg, cfg.seeds[0])
    losses = {}
    for _ in range(cfg.rounds):
        metrics = engine.run_round()
        if metrics.synced:
            losses[metrics.t] = metrics.val_loss
    return losses


@dataclass
class SpikeResult:
    # 损坏轮次上 损坏运行 / 干净运行 的验证损失比
    full_ratios: Dict[int, float]
    off_ratios: Dict[int, float]

    @property
    def suppressed(self) -> bool:
        return all(r <= 1.1 for r in self.full_ratios.values())

    @property
    def spikes_without_penalty(self) -> bool:
        return any(r >= 2.0 for r in self.off_ratios.values())

    @property
    def passed(self) -> bool:
        return self.suppressed and self.spikes_without_penalty


def spike_check(rounds: int = 30, seed: int = 0) -> SpikeResult:
    clean = synced_val_losses(spike_config("full", corrupted=False, rounds=rounds, seed=seed))
    full = synced_val_losses(spike_config("full", rounds=rounds, seed=seed))
    off = synced_val_losses(spike_config("w/o ALL", rounds=rounds, seed=seed))
    return SpikeResult(
        full_ratios={t: full[t] / clean[t] for t in full},
        off_ratios={t: off[t] / clean[t] for t in off},
    )


def wait_bound_check(rounds: int = 100, seed: int = 0) -> CheckResult:
    """a_edit，4 列中节点 0 慢 2 倍"""
    plan = LayerPlan.uniform(layers=4, params_per_layer=1e6, M=2, N=4)
    cost = CostModel(compute_time_per_param=1e-7)
    injector = Injector(scales={0: 2.0}, K=plan.K, seed=seed)
    metrics = run_timed("a_edit", cost, plan, injector, rounds, tau=8, tau_time=10.0)
    worst = max((r.max_wait - r.max_step for r in metrics.rounds if not r.warmup), default=0.0)
    return CheckResult("wait_bound", metrics.wait_bound_holds(), f"max(wait - step) = {worst:.3g}s")


# (场景, 协议, 目标保持率, 容差)
RETENTION_TARGETS = [
    ("consistent_straggler", "baseline", 115.94 / 225.75, 0.10),
    ("consistent_straggler", "edit", 118.47 / 236.50, 0.10),
    ("consistent_straggler", "a_edit", 223.07 / 237.45, 0.05),
    ("random_straggler", "edit", 209.44 / 236.50, 0.05),
    ("random_straggler", "baseline", 115.29 / 225.75, 0.10),
]


def straggler_check(rounds: int = 8, seed: int = 0) -> CheckResult:
    plan = LayerPlan.uniform(layers=32, params_per_layer=2.1875e8, M=8, N=8)
    cost = calibrate(CostModel(), plan).cost
    failures = []
    for kind, protocol, target, tol in RETENTION_TARGETS:
        table = retention_table(cost, plan, kind, protocols=[protocol], values=[0.0, 4.5], rounds=rounds, seed=seed)
        got = normalize(table[protocol])[-1]
        if abs(got - target) > tol:
            failures.append(f"{kind}/{protocol}: {got:.3f} vs {target:.3f}")
    bw = retention_table(cost, plan, "limited_bandwidth", values=[0, 40], rounds=rounds, seed=seed)
    if normalize(bw["baseline"])[-1] > 0.45:
        failures.append(f"limited_bandwidth/baseline: {normalize(bw['baseline'])[-1]:.3f} > 0.45")
    for protocol in ("edit", "a_edit"):
        if normalize(bw[protocol])[-1] < 0.98:
            failures.append(f"limited_bandwidth/{protocol}: {normalize(bw[protocol])[-1]:.3f} < 0.98")
    return CheckResult("straggler", not failures, "; ".join(failures))


def run_checks(cfg: ExperimentConfig, quick: bool = False) -> CheckReport:
    """执行全部验收检查；quick 缩短收敛界检验"""
    report = CheckReport()
    report.add(determinism_check(cfg))
    if quick:
        report.add(theorem_acceptance(seeds=(0, 1, 2), checkpoints=(100, 400)))
    else:
        report.add(theorem_acceptance())
    spike = spike_check()
    report.add(
        CheckResult(
            "spike",
            spike.passed,
            f"max full ratio {max(spike.full_ratios.values(), default=1.0):.3f}, "
            f"max off ratio {max(spike.off_ratios.values(), default=1.0):.3f}",
        )
    )
    report.add(wait_bound_check())
    report.add(straggler_check())
    return report
