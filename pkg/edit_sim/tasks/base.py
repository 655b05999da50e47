"""
分层任务抽象基类

定义模拟器训练的可微任务的统一接口。每个任务被划分为 L 个层（模块），
引擎逐层执行前向/反向，从而在层粒度上做分片与同步。

接口约定:
- begin(batch) 生成第 1 层的输入激活
- forward_layer / backward_layer 逐层计算，ctx 由前向保存给反向使用
- loss_from_output 计算批损失及其对最后一层输出的梯度
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from ..core import Rng, Vector, l2_norm
from ..errors import DimensionError


@dataclass(frozen=True)
class LayerSpec:
    """层描述"""

    # 层序号，从 1 开始
    index: int
    # 该层参数个数（未分片）
    param_count: int
    # mlp 专用形状信息
    in_dim: int = 0
    out_dim: int = 0
    activation: str = "identity"

    def __post_init__(self):
        if self.param_count <= 0:
            raise DimensionError(f"第 {self.index} 层参数个数必须为正: {self.param_count}")


@dataclass
class Batch:
    """一个工作节点在 (t, p) 步的小批量数据"""

    inputs: np.ndarray
    targets: np.ndarray
    worker_id: int = 0
    t: int = 0
    p: int = 0

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionError(
                f"输入与目标行数不一致: {self.inputs.shape[0]} != {self.targets.shape[0]}"
            )

    @property
    def size(self) -> int:
        return int(self.targets.shape[0])


class LayeredTask(ABC):
    """
    分层可微任务

    Attributes:
        kind: 任务类型 ("quadratic" | "mlp")
        layers: 层描述列表
        smoothness_L: 梯度 Lipschitz 常数（quadratic 精确，mlp 为估计）
        grad_bound_Ginf: 单坐标梯度上界（mlp 无先验上界，为 inf）
    """

    kind: str = ""

    def __init__(self, layers: Sequence[LayerSpec], noise_std: float, noise_clip: float):
        self.layers: List[LayerSpec] = list(layers)
        self.noise_std = float(noise_std)
        self.noise_clip = float(noise_clip)
        self._offsets = np.cumsum([0] + [spec.param_count for spec in self.layers])

    # ==================== 形状 ====================

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def param_dim(self) -> int:
        return int(self._offsets[-1])

    def layer_slice(self, l: int) -> slice:
        """第 l 层（1 起）在扁平参数中的区间"""
        return slice(int(self._offsets[l - 1]), int(self._offsets[l]))

    def split_layers(self, theta: Vector) -> List[Vector]:
        if theta.shape[0] != self.param_dim:
            raise DimensionError(f"参数长度 {theta.shape[0]} != {self.param_dim}")
        return [theta[self.layer_slice(spec.index)].copy() for spec in self.layers]

    def join_layers(self, layer_params: Sequence[Vector]) -> Vector:
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in layer_params])

    def _check_layer(self, l: int, params_l: Vector) -> LayerSpec:
        spec = self.layers[l - 1]
        if params_l.shape[0] != spec.param_count:
            raise DimensionError(
                f"第 {l} 层参数长度 {params_l.shape[0]} != {spec.param_count}"
            )
        return spec

    # ==================== 子类实现 ====================

    @property
    @abstractmethod
    def smoothness_L(self) -> float:
        """梯度 Lipschitz 常数"""

    @property
    @abstractmethod
    def grad_bound_Ginf(self) -> float:
        """单坐标梯度上界"""

    @abstractmethod
    def init_params(self, rng: Rng) -> Vector:
        """初始参数 θ_{0,0}"""

    @abstractmethod
    def make_batch(self, rng: Rng, batch_size: int, corruption_factor: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        """从给定随机流生成 (inputs, targets)"""

    @abstractmethod
    def begin(self, batch: Batch) -> Any:
        """第 1 层的输入激活"""

    @abstractmethod
    def forward_layer(self, l: int, params_l: Vector, activation_in: Any) -> Tuple[Any, Any]:
        """返回 (activation_out, saved_ctx)"""

    @abstractmethod
    def loss_from_output(self, output: Any, batch: Batch, ctxs: Sequence[Any]) -> Tuple[float, Any]:
        """返回 (loss, grad_out)"""

    @abstractmethod
    def backward_layer(self, l: int, params_l: Vector, saved_ctx: Any, grad_out: Any) -> Tuple[Vector, Any]:
        """返回 (grad_params_l, grad_in)"""

    @abstractmethod
    def validation_loss(self, theta: Vector) -> float:
        """同步锚点上的验证损失"""

    # ==================== 通用实现 ====================

    def loss_and_grad(self, theta: Vector, batch: Batch) -> Tuple[float, Vector]:
        """整模型前向 + 反向（未分片的直线实现）"""
        layer_params = self.split_layers(theta)
        activation = self.begin(batch)
        ctxs = []
        for spec in self.layers:
            activation, ctx = self.forward_layer(spec.index, layer_params[spec.index - 1], activation)
            ctxs.append(ctx)
        loss, grad = self.loss_from_output(activation, batch, ctxs)
        grads: List[Optional[Vector]] = [None] * self.num_layers
        for spec in reversed(self.layers):
            g, grad = self.backward_layer(spec.index, layer_params[spec.index - 1], ctxs[spec.index - 1], grad)
            grads[spec.index - 1] = g
        return loss, self.join_layers(grads)

    def batch_loss(self, theta: Vector, batch: Batch) -> float:
        layer_params = self.split_layers(theta)
        activation = self.begin(batch)
        ctxs = []
        for spec in self.layers:
            activation, ctx = self.forward_layer(spec.index, layer_params[spec.index - 1], activation)
            ctxs.append(ctx)
        loss, _ = self.loss_from_output(activation, batch, ctxs)
        return loss

    def full_grad(self, theta: Vector) -> Vector:
        """无噪声目标函数的梯度，默认对验证集求"""
        raise NotImplementedError(f"{self.kind} 任务不提供精确梯度")

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "param_dim": self.param_dim,
            "layers": [spec.param_count for spec in self.layers],
            "smoothness_L": self.smoothness_L,
            "grad_bound_Ginf": self.grad_bound_Ginf,
        }


def split_evenly(n: int, num_layers: int) -> List[int]:
    """
    把 n 个参数切成恰好 num_layers 层

    每层 ⌈n/L⌉ 个参数，最后一层承担余数；最后一层因此为空时（如 n=6, L=4）
    改为尽量均分，前 n mod L 层各多一个参数。

    Raises:
        ValueError: num_layers < 1 或 n < num_layers
    """
    if num_layers < 1 or n < num_layers:
        raise ValueError(f"无法把 {n} 个参数切成 {num_layers} 个非空层")
    base = math.ceil(n / num_layers)
    last = n - base * (num_layers - 1)
    if last >= 1:
        return [base] * (num_layers - 1) + [last]
    q, r = divmod(n, num_layers)
    return [q + 1] * r + [q] * (num_layers - r)


def relative_error(a: Vector, b: Vector) -> float:
    """范数意义下的相对误差"""
    scale = max(l2_norm(a), l2_norm(b), 1e-300)
    return l2_norm(a - b) / scale
