"""Task catalogue, DAG-gated process progression, and arm-task allocation.

A task is an ordered chain of processes with integer step durations. A
process may start only once every predecessor reports full progress; within a
task the chain orders itself, and cross-task edges can be added on top.
Progress is tracked as a completion fraction in [0, 1] per process and only
ever moves forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Task:
    id: int
    durations: tuple
    complexity: str  # "low" | "medium" | "high"

    def __post_init__(self):
        object.__setattr__(self, "durations", tuple(int(d) for d in self.durations))
        if not self.durations or min(self.durations) < 1:
            raise ValueError("every process needs a positive duration")
        if self.complexity not in ("low", "medium", "high"):
            raise ValueError("complexity must be low, medium, or high")

    @property
    def total_duration(self) -> int:
        return sum(self.durations)

    @property
    def process_count(self) -> int:
        return len(self.durations)


TASK_TABLE = {
    1: Task(1, (6, 6, 1), "low"),
    2: Task(2, (3, 2, 4, 13, 6), "high"),
    3: Task(3, (5, 3), "low"),
    4: Task(4, (2, 7, 5, 4), "medium"),
    5: Task(5, (1, 10, 8, 3), "medium"),
    6: Task(6, (6, 5, 6, 6, 7, 5), "high"),
    7: Task(7, (2, 5, 4), "low"),
    8: Task(8, (7, 3, 4), "low"),
}


class TaskGraph:
    """Progress ledger over (task id, process index) nodes with gated starts.

    Nodes are 1-based process indices. Within-task sequential edges are
    implicit; `extra_precedence` adds cross-task edges as (from_node, to_node)
    pairs. Construction rejects cycles.
    """

    def __init__(self, tasks, extra_precedence=()):
        self.tasks = {t.id: t for t in tasks}
        if len(self.tasks) != len(list(tasks)):
            raise ValueError("duplicate task ids")
        self.progress = {}
        self._preds = {}
        for t in self.tasks.values():
            for p in range(1, t.process_count + 1):
                node = (t.id, p)
                self.progress[node] = 0.0
                self._preds[node] = [(t.id, p - 1)] if p > 1 else []
        for src, dst in extra_precedence:
            src, dst = (src[0], src[1]), (dst[0], dst[1])
            if src not in self.progress or dst not in self.progress:
                raise ValueError(f"precedence edge on unknown node: {src} -> {dst}")
            self._preds[dst].append(src)
        self._check_acyclic()

    def _check_acyclic(self):
        indeg = {n: len(ps) for n, ps in self._preds.items()}
        out = {n: [] for n in self._preds}
        for n, ps in self._preds.items():
            for p in ps:
                out[p].append(n)
        queue = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for m in out[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    queue.append(m)
        if seen != len(self._preds):
            raise ValueError("precedence contains a cycle")

    def nodes(self):
        return list(self.progress)

    def predecessors(self, node):
        return list(self._preds[node])

    def duration(self, node) -> int:
        return self.tasks[node[0]].durations[node[1] - 1]

    def complete(self, node) -> bool:
        return self.progress[node] >= 1.0

    def ready(self, node) -> bool:
        """Start gate: every predecessor fully complete, node itself not yet."""
        if self.complete(node):
            return False
        return all(self.complete(p) for p in self._preds[node])

    def advance(self, node, steps: int = 1) -> float:
        """Credit `steps` on-target timesteps to a ready (or running) process."""
        if self.progress[node] == 0.0 and not self.ready(node):
            raise ValueError(f"process {node} is gated by incomplete predecessors")
        if steps < 0:
            raise ValueError("progress only moves forward")
        self.progress[node] = min(1.0, self.progress[node] + steps / self.duration(node))
        return self.progress[node]

    def available(self):
        """Nodes that may run right now, in (task, process) order."""
        return sorted(n for n in self.progress if self.ready(n))

    def task_done(self, task_id: int) -> bool:
        t = self.tasks[task_id]
        return all(self.complete((task_id, p)) for p in range(1, t.process_count + 1))

    @property
    def all_done(self) -> bool:
        return all(v >= 1.0 for v in self.progress.values())

    @property
    def completed_count(self) -> int:
        return sum(1 for v in self.progress.values() if v >= 1.0)


class Allocation:
    """Arm-to-process assignment with exclusivity both ways.

    Each process runs on at most one arm and each arm holds at most one
    process; violating either is a caller error, not a silent overwrite.
    """

    def __init__(self):
        self.assignment = {}
        self.pending = []

    def assign(self, arm: int, node):
        if arm in self.assignment:
            raise ValueError(f"arm {arm} already holds {self.assignment[arm]}")
        holder = self.holder(node)
        if holder is not None:
            raise ValueError(f"process {node} already runs on arm {holder}")
        self.assignment[arm] = node

    def release(self, arm: int):
        return self.assignment.pop(arm, None)

    def holder(self, node):
        for arm, held in self.assignment.items():
            if held == node:
                return arm
        return None

    def get(self, arm: int):
        return self.assignment.get(arm)
