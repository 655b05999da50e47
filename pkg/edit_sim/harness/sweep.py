"""
学习率 × 节点数扫描

每个 (协议, 节点数 K, lr) 在网格 (1, K) 上运行，最终验证损失取末 10 个值的均值并对种子平均。
趋势检查只发出警告：
- edit: 各 K 下最优 lr 的位置最多相差 1 格
- baseline: 最优 lr 随 K 单调不减
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..config import ExperimentConfig
from ..mesh import DeviceMesh
from ..protocol import build_engine
from ..tasks import make_task
from .metrics import last_mean
from .runner import drive

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    lr_grid: List[float]
    worker_counts: List[int]
    # protocol -> K -> lr 序号 -> 最终验证损失
    losses: Dict[str, Dict[int, List[float]]] = field(default_factory=dict)

    def argmin(self, protocol: str, workers: int) -> int:
        """最优 lr 在网格中的序号；NaN 视为最差"""
        row = self.losses[protocol][workers]
        keyed = [(math.inf if not math.isfinite(v) else v, idx) for idx, v in enumerate(row)]
        return min(keyed)[1]

    def argmin_lr(self, protocol: str, workers: int) -> float:
        return self.lr_grid[self.argmin(protocol, workers)]

    def spread(self, protocol: str) -> int:
        idx = [self.argmin(protocol, k) for k in self.worker_counts]
        return max(idx) - min(idx)

    def stable(self, protocol: str) -> bool:
        return self.spread(protocol) <= 1

    def monotone(self, protocol: str) -> bool:
        idx = [self.argmin(protocol, k) for k in sorted(self.worker_counts)]
        return all(a <= b for a, b in zip(idx, idx[1:]))

    def rows(self) -> List[dict]:
        out = []
        for protocol, by_k in self.losses.items():
            for k in self.worker_counts:
                out.append(
                    {
                        "protocol": protocol,
                        "workers": k,
                        "argmin_lr": self.argmin_lr(protocol, k),
                        **{f"lr={lr:g}": loss for lr, loss in zip(self.lr_grid, by_k[k])},
                    }
                )
        return out


def final_val_loss(cfg: ExperimentConfig, protocol: str, workers: int, lr: float, seed: int) -> float:
    """单次运行的最终验证损失（末 10 个同步值均值）"""
    engine = build_engine(
        cfg,
        seed,
        protocol=protocol,
        task=make_task(cfg.task, seed),
        mesh=DeviceMesh(1, workers),
        lr=lr,
    )
    values: List[float] = []
    final, _ = drive(
        cfg,
        engine,
        protocol,
        cfg.timing.injector,
        seed,
        cfg.rounds,
        on_round=lambda numeric, timed: values.append(numeric.val_loss),
    )
    if final is not None:
        values.append(final.val_loss)
    return last_mean(values)


def lr_sweep(
    cfg: ExperimentConfig,
    lr_grid: Optional[Sequence[float]] = None,
    worker_counts: Optional[Sequence[int]] = None,
    protocols: Optional[Sequence[str]] = None,
) -> SweepResult:
    lr_grid = list(cfg.sweep.lr_grid if lr_grid is None else lr_grid)
    worker_counts = list(cfg.sweep.worker_counts if worker_counts is None else worker_counts)
    protocols = list(cfg.sweep.protocols if protocols is None else protocols)
    if lr_grid != sorted(lr_grid):
        raise ValueError(f"lr 网格必须升序: {lr_grid}")

    result = SweepResult(lr_grid=lr_grid, worker_counts=worker_counts)
    for protocol in protocols:
        result.losses[protocol] = {}
        for k in worker_counts:
            row = []
            for lr in lr_grid:
                per_seed = [final_val_loss(cfg, protocol, k, lr, seed) for seed in cfg.seeds]
                row.append(sum(per_seed) / len(per_seed))
            result.losses[protocol][k] = row
            logger.info(f"扫描 {protocol} K={k}: 最优 lr={result.argmin_lr(protocol, k):g}")

    if "edit" in result.losses and not result.stable("edit"):
        logger.warning(f"edit 的最优 lr 随节点数漂移 {result.spread('edit')} 格")
    if "baseline" in result.losses and not result.monotone("baseline"):
        logger.warning("baseline 的最优 lr 未随节点数单调不减")
    return result
