"""
钩子系统

训练过程中的扩展点，指标写出器、日志与检查都通过订阅钩子实现：
- HookType: 钩子类型枚举
- HookPriority: 执行顺序（数值越小越先执行）
- HookContext: 传给回调的上下文
- HookResult: 控制后续回调是否继续
- HookRegistry: 注册、注销与同步调度
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Any, Callable, Dict, List, Optional

logger = logging.getLogger(__name__)


class HookType(Enum):
    """钩子类型"""

    RUN_START = auto()
    """
    单元开始运行

    Context data:
        - run_id: str
        - protocol: str
        - seed: int
    """

    ROUND_END = auto()
    """
    一轮结束（含同步结果与计时）

    Context data:
        - run_id: str
        - record: MetricsRecord
    """

    SYNC = auto()
    """
    完成一次伪梯度同步

    Context data:
        - t: int
        - outcomes: list[PenaltyOutcome]
    """

    ANOMALY = auto()
    """
    同步中剔除了异常伪梯度

    Context data:
        - t: int
        - count: int
    """

    ROLLBACK = auto()
    """全部成员异常，参数回滚"""

    RUN_END = auto()
    """
    单元运行结束

    Context data:
        - run_id: str
        - summary: dict
    """

    RUN_FAILED = auto()
    """
    单元运行失败

    Context data:
        - run_id: str
        - error: str
    """


class HookPriority(Enum):
    """钩子优先级"""

    HIGHEST = 0
    HIGH = 25
    NORMAL = 50
    LOW = 75
    LOWEST = 100
    MONITOR = 999
    """仅用于记录，不应修改数据"""


class HookResult(Enum):
    """钩子执行结果"""

    CONTINUE = auto()
    ABORT = auto()
    """中止后续回调"""


@dataclass
class HookContext:
    """钩子上下文"""

    hook_type: HookType = field(metadata={"description": "钩子类型"})
    data: Dict[str, Any] = field(default_factory=dict, metadata={"description": "钩子数据"})
    cancelled: bool = field(default=False, metadata={"description": "是否已取消"})
    results: List[HookResult] = field(default_factory=list, metadata={"description": "各回调结果"})

    def get(self, key: str, default: Any = None) -> Any:
        return self.data.get(key, default)

    def set(self, key: str, value: Any) -> None:
        self.data[key] = value

    def cancel(self) -> None:
        self.cancelled = True

    def was_aborted(self) -> bool:
        return self.cancelled or HookResult.ABORT in self.results

    def __repr__(self) -> str:
        return f"<HookContext({self.hook_type.name}) cancelled={self.cancelled}>"


HookCallback = Callable[[HookContext], Optional[HookResult]]


@dataclass
class HookRegistration:
    callback: HookCallback
    priority: HookPriority = HookPriority.NORMAL
    name: str = ""
    # 出错时向调度方抛出，而不是记录后跳过
    critical: bool = False


class HookRegistry:
    """钩子注册表，按优先级同步调度"""

    def __init__(self) -> None:
        self._hooks: Dict[HookType, List[HookRegistration]] = defaultdict(list)

    def register(
        self,
        hook_type: HookType,
        callback: HookCallback,
        priority: HookPriority = HookPriority.NORMAL,
        name: str = "",
        critical: bool = False,
    ) -> None:
        registration = HookRegistration(
            callback=callback,
            priority=priority,
            name=name or getattr(callback, "__name__", "hook"),
            critical=critical,
        )
        self._hooks[hook_type].append(registration)
        # 稳定排序，同优先级按注册顺序
        self._hooks[hook_type].sort(key=lambda r: r.priority.value)
        logger.debug(f"注册钩子: {hook_type.name} <- {registration.name} (priority={priority.name})")

    def unregister(self, hook_type: HookType, callback: HookCallback) -> bool:
        hooks = self._hooks.get(hook_type, [])
        for k, reg in enumerate(hooks):
            if reg.callback is callback:
                hooks.pop(k)
                return True
        return False

    def count(self, hook_type: HookType) -> int:
        return len(self._hooks.get(hook_type, []))

    def dispatch(self, hook_type: HookType, **data: Any) -> HookContext:
        """
        调度钩子

        回调抛出的异常被记录后跳过，critical 回调的异常继续向上抛出；
        返回 ABORT 时中止后续回调。
        """
        context = HookContext(hook_type=hook_type, data=data)
        for reg in self._hooks.get(hook_type, []):
            if context.cancelled:
                break
            try:
                result = reg.callback(context) or HookResult.CONTINUE
            except Exception as e:
                if reg.critical:
                    raise
                logger.error(f"钩子 {hook_type.name} 回调 {reg.name} 执行失败: {e}", exc_info=True)
                continue
            context.results.append(result)
            if result == HookResult.ABORT:
                context.cancel()
        return context
