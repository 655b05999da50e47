"""
计时模型

- cost: alpha-beta 通信成本与计算成本
- injector: 滞后 / 带宽受限 / 异构算力注入
- clock: 模拟时钟与事件队列
- scheduler: baseline / step / time 策略的推进
- calibrate: 标定与参考吞吐对照
"""

from .calibrate import (
    REFERENCE_LAGS,
    REFERENCE_REPEATS,
    REFERENCE_THROUGHPUT,
    CalibrationResult,
    calibrate,
    fit_step_time,
    normalize,
    reference_retention,
    reference_values,
    retention_table,
    scenario_injector,
)
from .clock import PHASES, EventQueue, SimClock
from .cost import CostModel, LayerPlan, PlanCosts, StepCost, collective_cost, plan_costs, step_cost, sync_layer_comm
from .injector import Injector
from .scheduler import (
    TIMED_PROTOCOLS,
    TimedMetrics,
    TimedRound,
    TimedRun,
    plan_for_engine,
    policy_for,
    run_timed,
    schedule_sync_overlap,
)

__all__ = [
    "REFERENCE_LAGS",
    "REFERENCE_REPEATS",
    "REFERENCE_THROUGHPUT",
    "CalibrationResult",
    "calibrate",
    "fit_step_time",
    "normalize",
    "reference_retention",
    "reference_values",
    "retention_table",
    "scenario_injector",
    "PHASES",
    "EventQueue",
    "SimClock",
    "CostModel",
    "LayerPlan",
    "PlanCosts",
    "StepCost",
    "collective_cost",
    "plan_costs",
    "step_cost",
    "sync_layer_comm",
    "Injector",
    "TIMED_PROTOCOLS",
    "TimedMetrics",
    "TimedRound",
    "TimedRun",
    "plan_for_engine",
    "policy_for",
    "run_timed",
    "schedule_sync_overlap",
]
