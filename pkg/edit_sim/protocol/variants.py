"""
协议变体

- baseline: t_warm = ∞，每步同步训练
- post_local_sgd: 预热后均匀平均，外层 sgd ν=1，无惩罚
- diloco: Nesterov 外层，均匀平均，无惩罚
- edit: 外层按配置（默认 Nesterov）+ 完整惩罚（受消融开关控制）
- a_edit: edit 的数值 + 按时间阈值同步
"""

import math
from dataclasses import dataclass
from typing import Dict, Optional

from ..config import ExperimentConfig
from ..errors import ConfigError
from ..hooks import HookRegistry
from ..mesh import DeviceMesh
from ..optim import LrSchedule
from ..tasks import CorruptionSchedule, LayeredTask, make_task
from .engine import EditEngine, InnerSpec, OuterSpec
from .penalty import SyncConfig


@dataclass(frozen=True)
class ProtocolPreset:
    """协议预设"""

    name: str
    # 始终同步训练
    synchronous: bool = False
    # 是否启用惩罚（再由消融开关细分）
    penalty: bool = False
    # 强制的外层类型；None 表示沿用配置
    outer_kind: Optional[str] = None
    # 强制外层 sgd ν=1、μ=0
    plain_average: bool = False
    # 按时间阈值同步
    time_policy: bool = False


PROTOCOLS: Dict[str, ProtocolPreset] = {
    "baseline": ProtocolPreset("baseline", synchronous=True, plain_average=True),
    "post_local_sgd": ProtocolPreset("post_local_sgd", plain_average=True),
    "diloco": ProtocolPreset("diloco", outer_kind="nesterov"),
    "edit": ProtocolPreset("edit", penalty=True),
    "a_edit": ProtocolPreset("a_edit", penalty=True, time_policy=True),
}


def make_protocol(name: str) -> ProtocolPreset:
    if name not in PROTOCOLS:
        raise ConfigError(f"未知协议 {name!r}，可选 {sorted(PROTOCOLS)}", "protocol.name")
    return PROTOCOLS[name]


def sync_config_for(preset: ProtocolPreset, cfg: ExperimentConfig) -> SyncConfig:
    s = cfg.protocol.sync
    ablation = cfg.protocol.ablation
    return SyncConfig(
        tau=s.tau,
        t_warm=math.inf if preset.synchronous else s.t_warm,
        delta=s.delta,
        alpha=s.alpha,
        phi=s.phi,
        eps=s.eps,
        ema_warmup_rounds=s.ema_warmup_rounds,
        anomaly_elimination=preset.penalty and ablation.anomaly_elimination,
        weighted_averaging=preset.penalty and ablation.weighted_averaging,
        gradient_clip=preset.penalty and ablation.gradient_clip,
    )


def outer_spec_for(preset: ProtocolPreset, cfg: ExperimentConfig) -> OuterSpec:
    if preset.plain_average:
        return OuterSpec(kind="sgd", lr=1.0, momentum=0.0)
    return OuterSpec(
        kind=preset.outer_kind or cfg.outer.kind,
        lr=cfg.outer.lr,
        momentum=cfg.outer.momentum,
    )


def inner_spec_for(cfg: ExperimentConfig) -> InnerSpec:
    return InnerSpec(
        kind=cfg.inner.kind,
        betas=tuple(cfg.inner.betas),
        eps=cfg.inner.eps,
        weight_decay=cfg.inner.weight_decay,
    )


def schedule_for(cfg: ExperimentConfig, lr: Optional[float] = None) -> LrSchedule:
    return LrSchedule(
        kind=cfg.schedule.kind,
        base_lr=lr if lr is not None else cfg.inner.lr,
        total_steps=cfg.rounds * cfg.protocol.sync.tau,
        warmup_steps=cfg.schedule.warmup_steps,
        min_lr_ratio=cfg.schedule.min_lr_ratio,
    )


def corruption_for(cfg: ExperimentConfig) -> Optional[CorruptionSchedule]:
    c = cfg.task.corruption
    if c.factor == 1.0 or not c.workers:
        return None
    return CorruptionSchedule(
        workers=frozenset(c.workers),
        factor=c.factor,
        start_round=c.start_round,
        every=c.every,
    )


def build_engine(
    cfg: ExperimentConfig,
    seed: int,
    protocol: Optional[str] = None,
    hooks: Optional[HookRegistry] = None,
    task: Optional[LayeredTask] = None,
    mesh: Optional[DeviceMesh] = None,
    lr: Optional[float] = None,
    init_params=None,
    init_momentum=None,
    step_offset: int = 0,
) -> EditEngine:
    """按配置构造引擎"""
    preset = make_protocol(protocol or cfg.protocol.name)
    return EditEngine(
        task=task or make_task(cfg.task, seed),
        mesh=mesh or DeviceMesh(cfg.mesh.M, cfg.mesh.N),
        sync_cfg=sync_config_for(preset, cfg),
        inner=inner_spec_for(cfg),
        outer=outer_spec_for(preset, cfg),
        schedule=schedule_for(cfg, lr),
        batch_size=cfg.batch_size,
        seed=seed,
        corruption=corruption_for(cfg),
        hooks=hooks,
        init_params=init_params,
        init_momentum=init_momentum,
        step_offset=step_offset,
    )
