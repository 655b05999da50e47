"""
扁平向量运算

所有模型状态都是一维 float64 numpy 数组。归约一律用 np.cumsum 做顺序累加，
保证同样输入在任何机器上得到逐位相同的结果（np.sum 是成对求和，顺序不固定）。
"""

from typing import Iterable

import numpy as np

from ..errors import DimensionError

# 参数/梯度容器
Vector = np.ndarray


def as_vector(values: Iterable[float]) -> Vector:
    """转换为一维 float64 向量（总是拷贝）"""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"需要一维向量，实际维度 {arr.ndim}")
    return arr


def zeros(n: int) -> Vector:
    return np.zeros(n, dtype=np.float64)


def _check_same_len(x: Vector, y: Vector) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"向量长度不一致: {x.shape[0]} != {y.shape[0]}")


def axpy(a: float, x: Vector, y: Vector) -> Vector:
    """返回 a*x + y，不修改输入"""
    _check_same_len(x, y)
    return a * x + y


def ordered_sum(values) -> float:
    """严格从左到右累加；空序列返回 0"""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    return float(np.cumsum(arr.ravel())[-1])


def dot(x: Vector, y: Vector) -> float:
    _check_same_len(x, y)
    return ordered_sum(x * y)


def sq_norm(x: Vector) -> float:
    """平方 L2 范数"""
    return ordered_sum(x * x)


def l2_norm(x: Vector) -> float:
    """L2 范数，空向量为 0"""
    return float(np.sqrt(sq_norm(x)))


def is_finite(x: Vector) -> bool:
    return bool(np.all(np.isfinite(x)))


def max_abs_diff(x: Vector, y: Vector) -> float:
    _check_same_len(x, y)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x - y)))
