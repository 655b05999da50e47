"""
收敛界

RHS = 1/(2√τ·η·(√T−1)) · ( L₀/ν
                          + L·n·G∞²·τ·φ·η²·(1+ln τT)/ε
                          + L·ν·n·G∞²·φ²·η²·(1+ln τT)/(2ε²) )

theorem_check 在二次型任务上运行 sgd/sgd + inv_sqrt 调度的 EDiT，
以种子平均的 min ‖∇L(θ̄_{t,p})‖² 与上式比较。θ̄ 为各副本参数均值。
默认把所有种子放进一个数组一起推进；method="engine" 时逐种子运行 EditEngine。
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..core import Rng, sq_norm
from ..errors import DomainError
from ..mesh import DeviceMesh
from ..optim import LrSchedule
from ..tasks import QuadraticTask
from .engine import INIT_STREAM, EditEngine, InnerSpec, OuterSpec
from .penalty import SyncConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TheoremParams:
    """收敛界的全部参数"""

    eta: float
    nu: float
    tau: int
    T: int
    phi: float
    eps: float
    n: int
    smoothness_L: float
    Ginf: float
    loss_at_init: float


def theorem_bound(params: TheoremParams) -> float:
    if params.T < 2:
        raise DomainError(f"T 必须 >= 2，实际 {params.T}")
    values = {
        "eta": params.eta, "nu": params.nu, "tau": params.tau, "phi": params.phi,
        "eps": params.eps, "n": params.n, "smoothness_L": params.smoothness_L,
        "Ginf": params.Ginf, "loss_at_init": params.loss_at_init,
    }
    bad = [k for k, v in values.items() if not v > 0]
    if bad:
        raise DomainError(f"参数必须为正: {bad}")

    p = params
    log_term = 1.0 + math.log(p.tau * p.T)
    common = p.smoothness_L * p.n * p.Ginf ** 2 * p.eta ** 2 * log_term
    first = p.loss_at_init / p.nu
    second = common * p.tau * p.phi / p.eps
    third = common * p.nu * p.phi ** 2 / (2.0 * p.eps ** 2)
    prefactor = 1.0 / (2.0 * math.sqrt(p.tau) * p.eta * (math.sqrt(p.T) - 1.0))
    return prefactor * (first + second + third)


@dataclass
class TheoremCheckResult:
    """收敛界检验结果"""

    # 各检查点 T 的种子平均 min ‖∇L‖²
    mean_min_grad_sq: Dict[int, float]
    bounds: Dict[int, float]
    per_seed: Dict[int, List[float]] = field(default_factory=dict)

    @property
    def bound_holds(self) -> bool:
        return all(self.mean_min_grad_sq[T] <= self.bounds[T] for T in self.bounds)

    @property
    def decays(self) -> bool:
        """检查点之间严格下降"""
        Ts = sorted(self.mean_min_grad_sq)
        return all(self.mean_min_grad_sq[b] < self.mean_min_grad_sq[a] for a, b in zip(Ts, Ts[1:]))

    @property
    def passed(self) -> bool:
        return self.bound_holds and self.decays


# (seed, worker, t) -> 该轮 τ 步的批均值噪声，形状 (τ, n)
NoiseFn = Callable[[int, int, int], np.ndarray]


def stream_noise(task: QuadraticTask, tau: int, batch_size: int) -> NoiseFn:
    """每个 (seed, worker, t) 一条子流，一次抽出整轮的截断高斯目标"""

    def draw(seed: int, worker: int, t: int) -> np.ndarray:
        targets = Rng(seed, (10, worker, t)).clipped_normal(task.noise_std, task.noise_clip, (tau, batch_size, task.n))
        return targets.sum(axis=1) / batch_size

    return draw


def min_grad_trajectory(
    task: QuadraticTask,
    mesh: DeviceMesh,
    eta: float,
    nu: float,
    tau: int,
    checkpoints: Sequence[int],
    seed: int,
    batch_size: int,
    phi: float = 10.0,
    eps: float = 1e-6,
) -> Dict[int, float]:
    """用 EditEngine 运行到 max(checkpoints) 轮，返回每个检查点处的 running min ‖∇L(θ̄)‖²"""
    engine = EditEngine(
        task=task,
        mesh=mesh,
        sync_cfg=SyncConfig(tau=tau, t_warm=0, phi=phi, eps=eps),
        inner=InnerSpec(kind="sgd"),
        outer=OuterSpec(kind="sgd", lr=nu, momentum=0.0),
        schedule=LrSchedule(kind="inv_sqrt", base_lr=eta),
        batch_size=batch_size,
        seed=seed,
    )
    best = [sq_norm(task.full_grad(engine.mean_params()))]

    def track(eng: EditEngine) -> None:
        best[0] = min(best[0], sq_norm(task.full_grad(eng.mean_params())))

    engine.on_step = track
    result: Dict[int, float] = {}
    for t in range(1, max(checkpoints) + 1):
        engine.run_round()
        if t in checkpoints:
            result[t] = best[0]
    return result


def batched_min_grad(
    task: QuadraticTask,
    workers: int,
    eta: float,
    nu: float,
    tau: int,
    checkpoints: Sequence[int],
    seeds: Sequence[int],
    noise: NoiseFn,
    phi: float = 10.0,
    eps: float = 1e-6,
) -> Dict[int, List[float]]:
    """
    所有种子一起推进的同一条 EDiT 轨迹（1×workers 网格，sgd/sgd，inv_sqrt，t_warm = 0）

    参数按 (seed, worker, param) 存成一个数组，逐层的范数、EMA 统计、
    softmax 权重、裁剪与回滚都在整个数组上计算，语义与 EditEngine 在同一设置下一致。

    Returns:
        检查点 T -> 各种子的 running min ‖∇L(θ̄)‖²
    """
    cfg = SyncConfig(tau=tau, t_warm=0, phi=phi, eps=eps)
    S, N = len(seeds), workers
    sizes = np.array([spec.param_count for spec in task.layers])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    eig, star, R = task.eigenvalues, task.theta_star, task.domain_radius

    def layer_norms(x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.add.reduceat(x * x, starts, axis=-1))

    def grad_sq(theta: np.ndarray) -> np.ndarray:
        g = eig * np.clip(theta - star, -R, R)
        return np.sum(g * g, axis=-1)

    theta0 = np.stack([task.init_params(Rng(s, (INIT_STREAM,))) for s in seeds])
    params = np.repeat(theta0[:, None, :], N, axis=1)
    anchors = theta0.copy()
    shape = (S, N, task.num_layers)
    mu, sigma, observed = np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=int)
    best = grad_sq(theta0)

    result: Dict[int, List[float]] = {}
    for t in range(max(checkpoints)):
        if t >= 1:
            delta = params - anchors[:, None, :]
            G = layer_norms(delta)

            # 异常剔除：先用更新前的统计判定
            z = np.divide(G - mu, sigma, out=np.zeros(shape), where=sigma > 0)
            anomaly = (observed >= cfg.ema_warmup_rounds) & (sigma > 0) & (z > cfg.delta)
            first = observed == 0
            d = G - mu
            new_sigma = np.sqrt((1.0 - cfg.alpha) * sigma ** 2 + cfg.alpha * ((1.0 - cfg.alpha) * d) ** 2)
            sigma = np.where(anomaly, sigma, np.where(first, 0.0, new_sigma))
            mu = np.where(anomaly, mu, np.where(first, G, mu + cfg.alpha * d))
            observed = observed + ~anomaly

            # 加权平均：以有限范数的最小值平移，异常成员权重为 0
            shift = np.min(np.where(anomaly, np.inf, G), axis=1, keepdims=True)
            rollback = np.isinf(shift)
            exps = np.where(anomaly, 0.0, np.exp(-(G - np.where(rollback, 0.0, shift))))
            total = exps.sum(axis=1, keepdims=True)
            weights = np.divide(exps, total, out=np.zeros(shape), where=total > 0)
            delta_bar = np.sum(np.repeat(weights, sizes, axis=-1) * delta, axis=1)

            beta = np.minimum(phi / (layer_norms(delta_bar) + eps), 1.0)
            stepped = anchors + nu * np.repeat(beta, sizes, axis=-1) * delta_bar
            anchors = np.where(np.repeat(rollback[:, 0, :], sizes, axis=-1), anchors, stepped)
            params = np.repeat(anchors[:, None, :], N, axis=1)
            if rollback.any():
                logger.warning(f"t={t} 有 {int(rollback.sum())} 个 (种子, 层) 全部成员异常，回滚")

        xi = np.stack([np.stack([noise(s, w, t) for w in range(N)]) for s in seeds])
        for p in range(tau):
            step = t * tau + p
            grad = eig * np.clip(params - star, -R, R) + xi[:, :, p, :]
            if step <= cfg.t_warm:
                grad = np.repeat(grad.mean(axis=1, keepdims=True), N, axis=1)
            params = params - (eta / math.sqrt(step + 1)) * grad
            best = np.minimum(best, grad_sq(params.mean(axis=1)))

        if t + 1 in checkpoints:
            result[t + 1] = [float(v) for v in best]
    return result


def theorem_check(
    n: int = 32,
    cond: float = 10.0,
    workers: int = 4,
    eta: float = 0.1,
    nu: float = 1.0,
    tau: int = 8,
    checkpoints: Sequence[int] = (500, 2000),
    seeds: Sequence[int] = tuple(range(10)),
    noise_std: float = 0.5,
    noise_clip: float = 1.0,
    batch_size: int = 4,
    phi: float = 10.0,
    eps: float = 1e-6,
    method: str = "batched",
) -> TheoremCheckResult:
    """
    二次型上的收敛界检验；较长的检查点是较短轨迹的前缀延伸

    Args:
        method: "batched" 所有种子一起向量化推进；"engine" 逐种子运行 EditEngine
    """
    if method not in ("batched", "engine"):
        raise ValueError(f"未知的 method: {method}")
    task = QuadraticTask(n=n, cond=cond, seed=0, noise_std=noise_std, noise_clip=noise_clip)
    per_seed: Dict[int, List[float]] = {T: [] for T in checkpoints}
    init_losses = [task.loss(task.init_params(Rng(seed, (INIT_STREAM,)))) for seed in seeds]
    if method == "batched":
        noise = stream_noise(task, tau, batch_size)
        per_seed.update(batched_min_grad(task, workers, eta, nu, tau, checkpoints, seeds, noise, phi, eps))
    else:
        mesh = DeviceMesh(1, workers)
        for seed in seeds:
            traj = min_grad_trajectory(task, mesh, eta, nu, tau, checkpoints, seed, batch_size, phi, eps)
            for T, v in traj.items():
                per_seed[T].append(v)
            logger.debug(f"种子 {seed}: {traj}")

    loss0 = sum(init_losses) / len(init_losses)
    bounds = {}
    means = {}
    for T in checkpoints:
        params = TheoremParams(
            eta=eta, nu=nu, tau=tau, T=T, phi=phi, eps=eps, n=n,
            smoothness_L=task.smoothness_L, Ginf=task.grad_bound_Ginf, loss_at_init=loss0,
        )
        bounds[T] = theorem_bound(params)
        means[T] = sum(per_seed[T]) / len(per_seed[T])
        logger.info(f"T={T}: 种子平均 min‖∇L‖²={means[T]:.6g}，界={bounds[T]:.6g}")
    return TheoremCheckResult(mean_min_grad_sq=means, bounds=bounds, per_seed=per_seed)
