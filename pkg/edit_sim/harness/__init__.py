"""
实验编排

- runner: 协议 × 场景 × 种子矩阵，JSONL 指标与 CSV 汇总
- sweep: 学习率 × 节点数扫描
- elastic: 弹性链式运行
- report: 汇总与吞吐对照表
- checks: 验收检查
"""

from .checks import CheckReport, CheckResult, run_checks, spike_check, wait_bound_check
from .elastic import ChainComparison, ElasticResult, PhaseResult, compare_chains, elastic_chain
from .metrics import MetricsRecord, MetricsWriter, read_metrics, summarize_records
from .report import ReportResult, report, write_summary, write_throughput_table
from .runner import (
    Cell,
    ExperimentResult,
    RunOutcome,
    RunStatus,
    build_cells,
    run_cell,
    run_experiment,
    run_matrix,
)
from .sweep import SweepResult, lr_sweep

__all__ = [
    "CheckReport",
    "CheckResult",
    "run_checks",
    "spike_check",
    "wait_bound_check",
    "ChainComparison",
    "ElasticResult",
    "PhaseResult",
    "compare_chains",
    "elastic_chain",
    "MetricsRecord",
    "MetricsWriter",
    "read_metrics",
    "summarize_records",
    "ReportResult",
    "report",
    "write_summary",
    "write_throughput_table",
    "Cell",
    "ExperimentResult",
    "RunOutcome",
    "RunStatus",
    "build_cells",
    "run_cell",
    "run_experiment",
    "run_matrix",
    "SweepResult",
    "lr_sweep",
]
