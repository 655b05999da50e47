"""
异常体系

模拟器所有可预期的失败都从 EditSimError 派生，CLI 根据异常类型决定退出码：
- ConfigError: 配置非法（退出码 1），携带出错字段路径
- DimensionError: 向量/分片长度不匹配
- NumericError: 梯度或损失出现非有限值
- ProtocolError: 集合通信缺少成员等协议违规
- DomainError: 数学定义域错误（如 T < 2 的收敛界）
- CalibrationError: 成本模型无法标定到目标比例
- CarryOverError: 弹性链式运行中参数形状不一致
"""

from typing import Optional


class EditSimError(Exception):
    """模拟器异常基类"""


class ConfigError(EditSimError):
    """配置错误"""

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class DimensionError(EditSimError):
    """维度不匹配"""


class NumericError(EditSimError):
    """数值异常（NaN / Inf）"""


class ProtocolError(EditSimError):
    """协议违规"""


class DomainError(EditSimError):
    """参数超出定义域"""


class CalibrationError(EditSimError):
    """标定失败"""


class CarryOverError(EditSimError):
    """阶段间参数传递失败"""


__all__ = [
    "EditSimError",
    "ConfigError",
    "DimensionError",
    "NumericError",
    "ProtocolError",
    "DomainError",
    "CalibrationError",
    "CarryOverError",
]
