"""
模拟时钟

每个节点一本分阶段账本（compute / shard_comm / sync_comm / wait），
elapsed 定义为账本按固定顺序的和，因此守恒关系逐位成立。
"""

import heapq
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

PHASES = ("compute", "shard_comm", "sync_comm", "wait")


class SimClock:
    def __init__(self, workers: int):
        self.ledger: Dict[int, Dict[str, float]] = {w: {ph: 0.0 for ph in PHASES} for w in range(workers)}

    def charge(self, worker: int, phase: str, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"耗时不能为负: {phase}={seconds}")
        self.ledger[worker][phase] += seconds

    def elapsed(self, worker: int) -> float:
        entry = self.ledger[worker]
        total = 0.0
        for ph in PHASES:
            total += entry[ph]
        return total

    def barrier(self, workers) -> Dict[int, float]:
        """等待到成员中最晚的时刻，返回各节点的等待时间"""
        workers = list(workers)
        target = max(self.elapsed(w) for w in workers)
        waits = {}
        for w in workers:
            waits[w] = max(0.0, target - self.elapsed(w))
            self.charge(w, "wait", waits[w])
        return waits

    def totals(self) -> Dict[str, float]:
        return {ph: sum(self.ledger[w][ph] for w in sorted(self.ledger)) for ph in PHASES}

    def wall_time(self) -> float:
        return max(self.elapsed(w) for w in self.ledger)


@dataclass(order=True)
class Event:
    time: float
    seq: int
    column: int = field(compare=False)
    kind: str = field(compare=False, default="step_done")


class EventQueue:
    """按时间顺序处理事件的最小堆"""

    def __init__(self) -> None:
        self._heap: List[Event] = []
        self._seq = 0
        self.log: List[Tuple[float, int, str]] = []

    def push(self, time: float, column: int, kind: str = "step_done") -> None:
        heapq.heappush(self._heap, Event(time, self._seq, column, kind))
        self._seq += 1

    def pop(self) -> Event:
        event = heapq.heappop(self._heap)
        self.log.append((event.time, event.column, event.kind))
        return event

    def __len__(self) -> int:
        return len(self._heap)
