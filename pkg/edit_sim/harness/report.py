"""
汇总报告

- summary.csv: 每个运行一行
- loss_curves.csv: 每条记录一行，供作图
- throughput.csv: 按场景的吞吐，列为各协议
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Union

from .metrics import read_metrics, summarize_records

logger = logging.getLogger(__name__)

SUMMARY_FIELDS = [
    "run_id",
    "protocol",
    "scenario",
    "seed",
    "status",
    "rounds",
    "final_train_loss",
    "final_val_loss",
    "min_grad_norm",
    "anomalies",
    "rollbacks",
    "samples_per_sec",
    "throughput_ratio",
    "message",
]

CURVE_FIELDS = ["run_id", "t", "p", "train_loss_mean", "val_loss", "grad_norm", "beta", "anomaly_count", "rollback"]

# 吞吐对照表中的协议列名
THROUGHPUT_COLUMNS = {"baseline": "baseline", "edit": "edit", "a_edit": "a-edit"}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if not math.isfinite(value) else repr(value)
    return str(value)


def _write_csv(path: Path, fields: Sequence[str], rows: Iterable[Mapping]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fields})
    return path


def throughput_ratios(rows: List[dict]) -> None:
    """相对同场景、同种子 baseline 的吞吐比，原地填入"""
    base = {
        (r["scenario"], r["seed"]): r.get("samples_per_sec")
        for r in rows
        if r["protocol"] == "baseline" and r.get("samples_per_sec")
    }
    for r in rows:
        ref = base.get((r["scenario"], r["seed"]))
        sps = r.get("samples_per_sec")
        if ref and sps is not None and math.isfinite(sps):
            r["throughput_ratio"] = sps / ref


def write_summary(outcomes, path: Union[str, Path]) -> Path:
    """运行结果写为汇总 CSV，行序与矩阵顺序一致"""
    rows = []
    for o in outcomes:
        row = {
            "run_id": o.run_id,
            "protocol": o.protocol,
            "scenario": o.scenario,
            "seed": o.seed,
            "status": o.status.value,
            "message": o.message,
        }
        row.update(o.summary)
        rows.append(row)
    throughput_ratios(rows)
    return _write_csv(Path(path), SUMMARY_FIELDS, rows)


def write_throughput_table(
    path: Union[str, Path],
    key: str,
    values: Sequence,
    table: Mapping[str, Sequence[float]],
) -> Path:
    """吞吐对照表：首列为扰动强度（lag / repeat / scenario），其余列为协议"""
    protocols = [p for p in THROUGHPUT_COLUMNS if p in table]
    fields = [key] + [THROUGHPUT_COLUMNS[p] for p in protocols]
    rows = []
    for idx, value in enumerate(values):
        row = {key: value}
        for p in protocols:
            row[THROUGHPUT_COLUMNS[p]] = table[p][idx]
        rows.append(row)
    return _write_csv(Path(path), fields, rows)


@dataclass
class ReportResult:
    summary_path: Path
    curves_path: Path
    throughput_path: Optional[Path]
    rows: List[dict]


def report(paths: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> ReportResult:
    """
    从指标文件生成汇总

    Raises:
        FileNotFoundError: 指标文件不存在
    """
    out_dir = Path(out_dir)
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"指标文件不存在: {', '.join(missing)}")

    rows: List[dict] = []
    curves: List[dict] = []
    for path in paths:
        records = read_metrics(path)
        if not records:
            logger.warning(f"空指标文件: {path}")
            continue
        head = records[0]
        row = {
            "run_id": head["run_id"],
            "protocol": head["protocol"],
            "scenario": head["scenario"],
            "seed": head["seed"],
            "status": "success",
        }
        row.update(summarize_records(records))
        rows.append(row)
        curves.extend(records)
    throughput_ratios(rows)

    summary_path = _write_csv(out_dir / "summary.csv", SUMMARY_FIELDS, rows)
    curves_path = _write_csv(out_dir / "loss_curves.csv", CURVE_FIELDS, curves)

    throughput_path = None
    by_scenario: Dict[str, Dict[str, List[float]]] = {}
    for r in rows:
        sps = r.get("samples_per_sec")
        if r["protocol"] in THROUGHPUT_COLUMNS and sps is not None and math.isfinite(sps):
            by_scenario.setdefault(r["scenario"], {}).setdefault(r["protocol"], []).append(sps)
    if by_scenario:
        scenarios = sorted(by_scenario)
        protocols = sorted({p for s in by_scenario.values() for p in s})
        table = {
            p: [
                sum(by_scenario[s].get(p, [math.nan])) / len(by_scenario[s].get(p, [math.nan]))
                for s in scenarios
            ]
            for p in protocols
        }
        throughput_path = write_throughput_table(out_dir / "throughput.csv", "scenario", scenarios, table)

    logger.info(f"报告完成: {len(rows)} 行 -> {summary_path}")
    return ReportResult(summary_path, curves_path, throughput_path, rows)


def write_sweep(result, path: Union[str, Path]) -> Path:
    """扫描结果：每个 (协议, 节点数) 一行，各 lr 的最终验证损失为列"""
    fields = ["protocol", "workers", "argmin_lr"] + [f"lr={lr:g}" for lr in result.lr_grid]
    return _write_csv(Path(path), fields, result.rows())
