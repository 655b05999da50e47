"""
基础数学模块

- vector: 扁平 float64 向量运算，固定从左到右的求和顺序
- rng: 跨平台确定性随机数生成器，支持按键派生子流
"""

from .vector import (
    Vector,
    as_vector,
    zeros,
    axpy,
    dot,
    sq_norm,
    l2_norm,
    ordered_sum,
    is_finite,
    max_abs_diff,
)
from .rng import Rng, normal_sample

__all__ = [
    "Vector",
    "as_vector",
    "zeros",
    "axpy",
    "dot",
    "sq_norm",
    "l2_norm",
    "ordered_sum",
    "is_finite",
    "max_abs_diff",
    "Rng",
    "normal_sample",
]
