"""
多层感知机任务

模型与一个固定的随机目标网络同构；目标 = 目标网络输出 + 截断高斯噪声。
隐藏层 tanh，最后一层恒等，损失为 ½·mean‖a − y‖²。
每层参数布局: W（out×in，行优先）后接 b（out）。
"""

import logging
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from ..core import Rng, Vector, l2_norm, ordered_sum
from ..errors import ConfigError
from .base import Batch, LayerSpec, LayeredTask

logger = logging.getLogger(__name__)

_TARGET_STREAM = 2
_VALIDATION_STREAM = 3
_PROBE_STREAM = 4


class MlpTask(LayeredTask):
    """全连接网络回归任务"""

    kind = "mlp"

    def __init__(
        self,
        dims: Sequence[int],
        seed: int,
        noise_std: float = 0.1,
        noise_clip: float = 0.5,
        val_size: int = 256,
    ):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or any(d <= 0 for d in dims):
            raise ConfigError(f"mlp 维度列表非法: {dims}", "task.mlp_dims")
        layers = []
        for i in range(len(dims) - 1):
            last = i == len(dims) - 2
            layers.append(
                LayerSpec(
                    index=i + 1,
                    param_count=dims[i + 1] * dims[i] + dims[i + 1],
                    in_dim=dims[i],
                    out_dim=dims[i + 1],
                    activation="identity" if last else "tanh",
                )
            )
        super().__init__(layers, noise_std=noise_std, noise_clip=noise_clip)
        self.dims = dims
        self.seed = int(seed)
        self.target_params: Vector = self._random_params(Rng(seed, (_TARGET_STREAM,)), gain=1.5)

        val_rng = Rng(seed, (_VALIDATION_STREAM,))
        val_x = val_rng.normal(0.0, 1.0, (val_size, dims[0]))
        self._val_batch = Batch(inputs=val_x, targets=self._target_output(val_x))
        self._smoothness: Optional[float] = None

    # ==================== 参数 ====================

    def _random_params(self, rng: Rng, gain: float = 1.0) -> Vector:
        chunks: List[Vector] = []
        for spec in self.layers:
            w = rng.normal(0.0, gain / np.sqrt(spec.in_dim), spec.out_dim * spec.in_dim)
            chunks.append(w)
            chunks.append(np.zeros(spec.out_dim))
        return np.concatenate(chunks)

    def init_params(self, rng: Rng) -> Vector:
        return self._random_params(rng)

    def _unpack(self, spec: LayerSpec, params_l: Vector) -> Tuple[np.ndarray, np.ndarray]:
        split = spec.out_dim * spec.in_dim
        return params_l[:split].reshape(spec.out_dim, spec.in_dim), params_l[split:]

    def _target_output(self, x: np.ndarray) -> np.ndarray:
        activation = x
        for spec, params_l in zip(self.layers, self.split_layers(self.target_params)):
            activation, _ = self.forward_layer(spec.index, params_l, activation)
        return activation

    # ==================== 数据 ====================

    def make_batch(self, rng: Rng, batch_size: int, corruption_factor: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        x = rng.normal(0.0, 1.0, (batch_size, self.dims[0]))
        noise = rng.clipped_normal(self.noise_std, self.noise_clip, (batch_size, self.dims[-1]))
        y = self._target_output(x) + noise
        if corruption_factor != 1.0:
            y = y * corruption_factor
        return x, y

    # ==================== 逐层计算 ====================

    def begin(self, batch: Batch) -> np.ndarray:
        return batch.inputs

    def forward_layer(self, l: int, params_l: Vector, activation_in: Any) -> Tuple[Any, Any]:
        spec = self._check_layer(l, params_l)
        W, b = self._unpack(spec, params_l)
        z = activation_in @ W.T + b
        out = np.tanh(z) if spec.activation == "tanh" else z
        return out, (activation_in, out)

    def loss_from_output(self, output: Any, batch: Batch, ctxs: Sequence[Any]) -> Tuple[float, Any]:
        diff = output - batch.targets
        loss = 0.5 * ordered_sum(diff * diff) / batch.size
        return loss, diff / batch.size

    def backward_layer(self, l: int, params_l: Vector, saved_ctx: Any, grad_out: Any) -> Tuple[Vector, Any]:
        spec = self._check_layer(l, params_l)
        W, _ = self._unpack(spec, params_l)
        x, out = saved_ctx
        dz = grad_out * (1.0 - out * out) if spec.activation == "tanh" else grad_out
        dW = dz.T @ x
        db = dz.sum(axis=0)
        return np.concatenate([dW.ravel(), db]), dz @ W

    # ==================== 评估 ====================

    def validation_loss(self, theta: Vector) -> float:
        return self.batch_loss(theta, self._val_batch)

    def full_grad(self, theta: Vector) -> Vector:
        return self.loss_and_grad(theta, self._val_batch)[1]

    @property
    def smoothness_L(self) -> float:
        # 初始点附近沿随机方向的梯度差分估计
        if self._smoothness is None:
            rng = Rng(self.seed, (_PROBE_STREAM,))
            theta = self.init_params(rng)
            base = self.full_grad(theta)
            h = 1e-4
            estimate = 0.0
            for _ in range(8):
                v = rng.normal(0.0, 1.0, self.param_dim)
                v = v / l2_norm(v)
                estimate = max(estimate, l2_norm(self.full_grad(theta + h * v) - base) / h)
            self._smoothness = estimate
        return self._smoothness

    @property
    def grad_bound_Ginf(self) -> float:
        # 参数不做裁剪，没有先验上界；运行时记录经验最大值
        return float("inf")
