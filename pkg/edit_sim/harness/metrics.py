"""
指标记录

每个同步轮一条 JSON 记录，按键排序写出，非有限值写为 null，
同一配置与种子重复运行时文件逐字节一致。
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..hooks import HookContext, HookPriority, HookRegistry, HookResult, HookType

logger = logging.getLogger(__name__)


def finite_or_none(value: Any) -> Any:
    """递归地把 NaN / ±inf 替换为 None"""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [finite_or_none(v) for v in value]
    return value


@dataclass
class MetricsRecord:
    """一轮的指标"""

    run_id: str
    seed: int
    protocol: str
    scenario: str
    t: int
    # 本轮各列内层步数中的最大值
    p: int
    train_loss: Dict[int, float] = field(default_factory=dict)
    train_loss_mean: float = math.nan
    val_loss: float = math.nan
    # 同步锚点上的完整梯度范数
    grad_norm: float = math.nan
    # 本轮各模块伪梯度范数（有限值）的均值与最大值
    pseudo_norm_mean: float = math.nan
    pseudo_norm_max: float = math.nan
    anomaly_count: int = 0
    beta: float = 1.0
    rollback: bool = False
    synced: bool = False
    faulted: List[int] = field(default_factory=list)
    samples_per_sec: Optional[float] = None
    wait_fraction: Optional[float] = None
    final: bool = False

    def to_dict(self) -> dict:
        return finite_or_none(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


class MetricsWriter:
    """JSONL 写出器，作为 ROUND_END 订阅者"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w", encoding="utf-8", newline="\n")
        self.records: List[MetricsRecord] = []
        self._last_key: Optional[tuple] = None

    def write(self, record: MetricsRecord) -> None:
        key = (record.t, record.p) if not record.final else (record.t, math.inf)
        if self._last_key is not None and key < self._last_key:
            raise ValueError(f"指标记录顺序倒退: {key} < {self._last_key}")
        self._last_key = key
        self._file.write(record.to_json() + "\n")
        self._file.flush()
        self.records.append(record)

    def _on_round_end(self, context: HookContext) -> HookResult:
        self.write(context.get("record"))
        return HookResult.CONTINUE

    def subscribe(self, hooks: HookRegistry) -> None:
        """写入失败必须让运行失败，因此以 critical 方式订阅"""
        hooks.register(HookType.ROUND_END, self._on_round_end, HookPriority.MONITOR, name="metrics_writer", critical=True)

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: Union[str, Path]) -> List[dict]:
    """读取 JSONL 指标文件"""
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def last_mean(values: List[Optional[float]], window: int = 10) -> float:
    """最后 window 个有效值的均值"""
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return math.nan
    tail = finite[-window:]
    return sum(tail) / len(tail)


def summarize_records(records: List[dict]) -> Dict[str, Any]:
    """单个运行的汇总：末 10 个值均值、最小梯度范数、异常与回滚计数"""
    rounds = [r for r in records if not r.get("final")]
    grad_norms = [r["grad_norm"] for r in records if r.get("grad_norm") is not None]
    throughput = [r["samples_per_sec"] for r in rounds if r.get("samples_per_sec") is not None]
    return {
        "rounds": len(rounds),
        "final_train_loss": last_mean([r.get("train_loss_mean") for r in rounds]),
        "final_val_loss": last_mean([r.get("val_loss") for r in records]),
        "min_grad_norm": min(grad_norms) if grad_norms else math.nan,
        "anomalies": sum(r.get("anomaly_count", 0) for r in records),
        "rollbacks": sum(1 for r in records if r.get("rollback")),
        "samples_per_sec": last_mean(throughput, window=len(throughput) or 1),
    }
