"""
任务模块

- LayeredTask: 分层可微任务接口
- QuadraticTask: 定理检验用二次型
- MlpTask: 真实感实验用多层感知机
- DataShard / sample_batch: 每节点确定性数据
"""

from typing import Optional

from .base import Batch, LayerSpec, LayeredTask, relative_error, split_evenly
from .data import CorruptionSchedule, DataShard, make_shard, sample_batch
from .mlp import MlpTask
from .quadratic import QuadraticTask
from ..errors import ConfigError


def quadratic_make(n: int, cond: float, seed: int, **kwargs) -> QuadraticTask:
    """构造二次型任务"""
    return QuadraticTask(n=n, cond=cond, seed=seed, **kwargs)


def make_task(task_cfg, seed: Optional[int] = None) -> LayeredTask:
    """
    根据配置块构造任务

    task_cfg.seed 为空时使用运行种子，从而每个种子对应不同的问题实例。
    """
    task_seed = task_cfg.seed if task_cfg.seed is not None else (seed or 0)
    if task_cfg.kind == "quadratic":
        return QuadraticTask(
            n=task_cfg.n,
            cond=task_cfg.cond,
            seed=task_seed,
            num_layers=task_cfg.num_layers,
            noise_std=task_cfg.noise_std,
            noise_clip=task_cfg.noise_clip,
            domain_radius=task_cfg.domain_radius,
            init_radius=task_cfg.init_radius,
        )
    if task_cfg.kind == "mlp":
        return MlpTask(
            dims=task_cfg.mlp_dims,
            seed=task_seed,
            noise_std=task_cfg.noise_std,
            noise_clip=task_cfg.noise_clip,
            val_size=task_cfg.val_size,
        )
    raise ConfigError(f"未知任务类型: {task_cfg.kind}", "task.kind")


__all__ = [
    "Batch",
    "LayerSpec",
    "LayeredTask",
    "QuadraticTask",
    "MlpTask",
    "CorruptionSchedule",
    "DataShard",
    "make_shard",
    "sample_batch",
    "quadratic_make",
    "make_task",
    "relative_error",
    "split_evenly",
]
