"""
二次型任务

L(θ) = ½ (θ − θ*)ᵀ A (θ − θ*)，A 为对角阵，特征值在 [1, cond] 上对数等距。
每个坐标在 |θ_k − θ*_k| > R 之外按 Huber 方式线性延拓（默认 R = 100，常规配置的轨迹远在其内，损失就是纯二次型），因此：
- 梯度 Lipschitz 常数恰为 cond
- 单坐标梯度 |∇L|_∞ ≤ cond·R，加上截断噪声后 ≤ cond·R + noise_clip

随机梯度为 ∇L(θ) + ξ̄，ξ̄ 是批内截断高斯目标的均值，期望为零。
"""

import logging
import math
from typing import Any, Sequence, Tuple

import numpy as np

from ..core import Rng, Vector, dot, ordered_sum
from ..errors import ConfigError
from .base import Batch, LayerSpec, LayeredTask, split_evenly

logger = logging.getLogger(__name__)

# θ* 使用的子流编号
_OPTIMUM_STREAM = 1


class QuadraticTask(LayeredTask):
    """对角二次型（带 Huber 延拓）"""

    kind = "quadratic"

    def __init__(
        self,
        n: int,
        cond: float,
        seed: int,
        num_layers: int = 4,
        noise_std: float = 0.0,
        noise_clip: float = 1.0,
        domain_radius: float = 100.0,
        init_radius: float = 1.0,
    ):
        if n < 2:
            raise ConfigError(f"二次型维度至少为 2，实际 {n}", "task.n")
        if cond < 1:
            raise ConfigError(f"条件数必须 >= 1，实际 {cond}", "task.cond")
        if n < num_layers:
            raise ConfigError(f"维度 {n} 不足以切成 {num_layers} 层", "task.n")
        sizes = split_evenly(n, num_layers)
        super().__init__(
            [LayerSpec(index=i + 1, param_count=s) for i, s in enumerate(sizes)],
            noise_std=noise_std,
            noise_clip=noise_clip,
        )
        self.n = int(n)
        self.cond = float(cond)
        self.domain_radius = float(domain_radius)
        self.init_radius = float(init_radius)

        eigenvalues = np.logspace(0.0, math.log10(self.cond), self.n)
        eigenvalues[0] = 1.0
        eigenvalues[-1] = self.cond
        self.eigenvalues: Vector = eigenvalues
        self.theta_star: Vector = Rng(seed, (_OPTIMUM_STREAM,)).uniform(-1.0, 1.0, self.n)

    @property
    def smoothness_L(self) -> float:
        return float(np.max(self.eigenvalues))

    @property
    def grad_bound_Ginf(self) -> float:
        return self.cond * self.domain_radius + self.noise_clip

    def init_params(self, rng: Rng) -> Vector:
        return self.theta_star + rng.uniform(-self.init_radius, self.init_radius, self.n)

    def make_batch(self, rng: Rng, batch_size: int, corruption_factor: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        targets = rng.clipped_normal(self.noise_std, self.noise_clip, (batch_size, self.n))
        if corruption_factor != 1.0:
            targets = targets * corruption_factor
        return np.zeros((batch_size, 0)), targets

    # ==================== 逐层计算 ====================

    def begin(self, batch: Batch) -> Vector:
        # 激活即为噪声均值，逐层透传
        return batch.targets.sum(axis=0) / batch.size

    def forward_layer(self, l: int, params_l: Vector, activation_in: Any) -> Tuple[Any, Any]:
        self._check_layer(l, params_l)
        return activation_in, params_l.copy()

    def loss_from_output(self, output: Any, batch: Batch, ctxs: Sequence[Any]) -> Tuple[float, Any]:
        theta = np.concatenate(ctxs)
        d = theta - self.theta_star
        return self._huber(d) + dot(output, d), output

    def backward_layer(self, l: int, params_l: Vector, saved_ctx: Any, grad_out: Any) -> Tuple[Vector, Any]:
        self._check_layer(l, params_l)
        sl = self.layer_slice(l)
        d = params_l - self.theta_star[sl]
        grad = self.eigenvalues[sl] * np.clip(d, -self.domain_radius, self.domain_radius)
        return grad + grad_out[sl], grad_out

    # ==================== 精确量 ====================

    def _huber(self, d: Vector) -> float:
        R = self.domain_radius
        ad = np.abs(d)
        inside = 0.5 * self.eigenvalues * d * d
        outside = self.eigenvalues * (R * ad - 0.5 * R * R)
        return ordered_sum(np.where(ad <= R, inside, outside))

    def loss(self, theta: Vector) -> float:
        return self._huber(theta - self.theta_star)

    def validation_loss(self, theta: Vector) -> float:
        return self.loss(theta)

    def full_grad(self, theta: Vector) -> Vector:
        d = theta - self.theta_star
        return self.eigenvalues * np.clip(d, -self.domain_radius, self.domain_radius)
