"""
分层同步

对第 l 层执行一次完整的伪梯度同步:
- 模块范数: 列内（分片组）对分片平方范数做一次标量求和
- 异常剔除与 EMA 更新: 按 (worker, layer) 统计
- 行内（同步组）加权平均，得到 Δ̄
- 列内再做一次标量求和得到 Ḡ，裁剪后交给外层优化器
同步后同一行的锚点与参数分片逐位相同。
"""

import logging
import math
from typing import Dict, List, Mapping, Optional

from ..core import Vector, sq_norm
from ..errors import ProtocolError
from ..mesh import Collectives, DeviceMesh, GroupId
from ..optim import outer_step
from .penalty import (
    INF,
    PenaltyOutcome,
    SyncConfig,
    SyncStats,
    clip_coefficient,
    ema_update,
    is_anomaly,
    penalty_weights,
    uniform_weights,
)
from .worker import WorkerState

logger = logging.getLogger(__name__)


def pseudo_gradients(workers: Mapping[int, WorkerState], layer: int) -> Dict[int, Vector]:
    """Δ = θ_{t,τ} − θ_t"""
    k = layer - 1
    return {w: ws.params[k] - ws.anchors[k] for w, ws in workers.items()}


def module_norms(
    mesh: DeviceMesh,
    coll: Collectives,
    workers: Mapping[int, WorkerState],
    deltas: Mapping[int, Vector],
) -> Dict[int, float]:
    """整层范数；列内任一成员出错时整列记为 +inf"""
    norms: Dict[int, float] = {}
    for col in mesh.cols():
        members = mesh.members(col)
        totals = coll.scalar_sum({w: sq_norm(deltas[w]) for w in members}, col)
        faulted = any(workers[w].faulted for w in members)
        for w in members:
            norms[w] = INF if faulted or not math.isfinite(totals[w]) else math.sqrt(totals[w])
    return norms


def screen_norms(stats: SyncStats, norms: Mapping[int, float], layer: int, cfg: SyncConfig) -> Dict[int, float]:
    """先用更新前的统计判异常，异常记为 +inf，正常值再进入 EMA"""
    screened: Dict[int, float] = {}
    for w in sorted(norms):
        G = norms[w]
        if cfg.anomaly_elimination and is_anomaly(stats, w, layer, G, cfg):
            logger.debug(f"第 {layer} 层节点 {w} 伪梯度范数异常: G={G:.6g}")
            G = INF
        ema_update(stats, w, layer, G, cfg.alpha)
        screened[w] = G
    return screened


def sync_group(
    mesh: DeviceMesh,
    coll: Collectives,
    group: GroupId,
    deltas: Mapping[int, Vector],
    norms: Mapping[int, float],
    cfg: SyncConfig,
) -> Optional[Dict[int, Vector]]:
    """
    同步组内的加权平均

    Returns:
        每个成员得到的 Δ̄；全部成员为 +inf（γ == 0）时返回 None
    """
    members = mesh.members(group)
    row_norms = [norms[w] for w in members]
    weights = penalty_weights(row_norms) if cfg.weighted_averaging else uniform_weights(row_norms)
    if weights is None:
        return None
    return coll.weighted_sum(
        {w: deltas[w] for w in members},
        dict(zip(members, weights)),
        group,
    )


def _row_weights(row_norms: List[float], cfg: SyncConfig) -> List[float]:
    weights = penalty_weights(row_norms) if cfg.weighted_averaging else uniform_weights(row_norms)
    return weights if weights is not None else [0.0] * len(row_norms)


def sync_layer(
    mesh: DeviceMesh,
    coll: Collectives,
    workers: Mapping[int, WorkerState],
    stats: SyncStats,
    cfg: SyncConfig,
    layer: int,
) -> PenaltyOutcome:
    """对所有同步组执行第 layer 层的同步"""
    k = layer - 1
    deltas = pseudo_gradients(workers, layer)
    raw = module_norms(mesh, coll, workers, deltas)
    screened = screen_norms(stats, raw, layer, cfg)

    order = sorted(workers)
    outcome = PenaltyOutcome(
        layer=layer,
        norms=[raw[w] for w in order],
        anomalies=[math.isinf(screened[w]) for w in order],
    )

    delta_bar: Dict[int, Vector] = {}
    rolled_back = []
    weights: Dict[int, float] = {}
    for row in mesh.rows():
        members = mesh.members(row)
        result = sync_group(mesh, coll, row, deltas, screened, cfg)
        rolled_back.append(result is None)
        weights.update(zip(members, _row_weights([screened[w] for w in members], cfg)))
        if result is not None:
            delta_bar.update(result)
    outcome.weights = [weights[w] for w in order]

    if any(rolled_back):
        if not all(rolled_back):
            raise ProtocolError(f"第 {layer} 层各同步组回滚判定不一致")
        for ws in workers.values():
            ws.restore_layer(layer)
        outcome.rollback = True
        logger.warning(f"第 {layer} 层全部成员异常，回滚到上次同步参数")
        return outcome

    G_bar: Dict[int, float] = {}
    for col in mesh.cols():
        members = mesh.members(col)
        totals = coll.scalar_sum({w: sq_norm(delta_bar[w]) for w in members}, col)
        for w in members:
            G_bar[w] = math.sqrt(totals[w])
    outcome.G_bar = G_bar[order[0]]
    outcome.beta = clip_coefficient(outcome.G_bar, cfg.phi, cfg.eps) if cfg.gradient_clip else 1.0

    for w in order:
        ws = workers[w]
        beta = clip_coefficient(G_bar[w], cfg.phi, cfg.eps) if cfg.gradient_clip else 1.0
        ws.anchors[k] = outer_step(ws.outer[k], ws.anchors[k], beta * delta_bar[w])
        ws.params[k] = ws.anchors[k].copy()
        if ws.inner_snapshot:
            ws.inner_snapshot[k] = ws.inner[k].clone()
    return outcome
