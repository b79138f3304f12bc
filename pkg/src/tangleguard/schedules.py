"""Reference parallel-process schedules and the trace validator.

Four fixture schedules lay the eight catalogue tasks onto a 35-step grid as
(start, end) occupancy spans per process, 1-based inclusive. A vacant
interval between consecutive processes of a task is a mandated latency
period, so a conforming trace must keep at least that much separation. Span
durations are the fixtures' own and are not required to match the task
catalogue durations; validation checks ordering and gaps only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEDULE_FIXTURES = {
    "v1": {
        1: [(2, 2), (6, 11), (13, 13)],
        2: [(1, 3), (4, 5), (17, 20), (24, 32), (33, 33)],
        3: [(2, 6), (9, 11)],
        4: [(3, 4), (9, 15), (18, 22), (25, 28)],
        5: [(4, 4), (10, 19), (23, 30), (33, 35)],
        6: [(1, 6), (10, 14), (16, 21), (24, 29), (31, 35)],
        7: [(2, 3), (12, 16), (24, 27)],
        8: [(1, 7), (10, 12), (15, 18)],
    },
    "v2": {
        1: [(3, 3), (7, 12), (14, 14)],
        2: [(1, 3), (5, 6), (15, 18), (24, 32), (33, 33)],
        3: [(1, 5), (9, 11)],
        4: [(1, 2), (10, 16), (19, 23), (26, 29)],
        5: [(2, 2), (8, 17), (21, 28), (31, 33)],
        6: [(2, 7), (10, 14), (16, 21), (24, 29), (31, 35)],
        7: [(1, 2), (13, 17), (25, 28)],
        8: [(2, 8), (12, 14), (17, 20)],
    },
    "v3": {
        1: [(4, 4), (8, 13), (15, 15)],
        2: [(2, 4), (5, 6), (16, 19), (26, 34), (35, 35)],
        3: [(2, 6), (9, 11)],
        4: [(3, 4), (11, 17), (20, 24), (27, 30)],
        5: [(1, 1), (10, 19), (23, 30), (33, 35)],
        6: [(1, 6), (10, 14), (16, 21), (24, 29), (31, 35)],
        7: [(3, 4), (14, 18), (27, 30)],
        8: [(1, 7), (12, 14), (18, 21)],
    },
    "v4": {
        1: [(1, 1), (6, 11), (13, 13)],
        2: [(2, 4), (5, 6), (14, 17), (24, 32), (33, 33)],
        3: [(1, 5), (8, 10)],
        4: [(2, 3), (9, 15), (18, 22), (25, 28)],
        5: [(3, 3), (6, 15), (19, 26), (29, 31)],
        6: [(2, 6), (11, 15), (17, 22), (25, 30), (31, 35)],
        7: [(1, 2), (12, 16), (23, 26)],
        8: [(2, 7), (10, 12), (15, 18)],
    },
}


def fixture_trace(name: str):
    """Replay a fixture as a trace: one record per (task, process) span."""
    fixture = SCHEDULE_FIXTURES[name]
    return [
        {"task": tid, "process": p, "start": a, "end": b}
        for tid in sorted(fixture)
        for p, (a, b) in enumerate(fixture[tid], start=1)
    ]


@dataclass
class ScheduleVerdict:
    ok: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def _normalize(trace):
    records = []
    for i, rec in enumerate(trace):
        if isinstance(rec, dict):
            try:
                rec = (rec["task"], rec["process"], rec["start"], rec["end"])
            except KeyError as missing:
                raise ValueError(f"trace record {i} lacks field {missing}") from None
        if len(rec) != 4:
            raise ValueError(f"trace record {i} is not (task, process, start, end)")
        try:
            records.append(tuple(int(x) for x in rec))
        except (TypeError, ValueError):
            raise ValueError(f"trace record {i} has non-integer fields: {rec!r}") from None
    return records


def validate_schedule(trace, fixture) -> ScheduleVerdict:
    """Check a trace against a fixture's precedence order and wait gaps.

    Rules, per task: a process appears at most once with start <= end; process
    p+1 starts only after p ends; the vacancy before p+1 is at least the
    fixture's vacancy there; a process never runs without its predecessor in
    the trace. Durations are not compared.
    """
    if isinstance(fixture, str):
        fixture = SCHEDULE_FIXTURES[fixture]
    spans = {}
    violations = []
    for task, proc, start, end in _normalize(trace):
        if task not in fixture:
            violations.append(f"task {task} is not in the fixture")
            continue
        if not 1 <= proc <= len(fixture[task]):
            violations.append(f"task {task} has no process P{proc}")
            continue
        if start > end:
            violations.append(f"task {task} P{proc}: empty interval ({start} > {end})")
        if (task, proc) in spans:
            violations.append(f"task {task} P{proc}: split into multiple intervals")
        spans[(task, proc)] = (start, end)
    for (task, proc), (start, end) in sorted(spans.items()):
        if proc == 1:
            continue
        prev = spans.get((task, proc - 1))
        if prev is None:
            violations.append(f"task {task} P{proc}: predecessor P{proc - 1} never ran")
            continue
        if start <= prev[1]:
            violations.append(
                f"task {task} P{proc}: starts at {start} before P{proc - 1} ends at {prev[1]}"
            )
            continue
        mandated = fixture[task][proc - 1][0] - fixture[task][proc - 2][1] - 1
        waited = start - prev[1] - 1
        if waited < mandated:
            violations.append(
                f"task {task} P{proc}: waited {waited} steps, latency period is {mandated}"
            )
    return ScheduleVerdict(not violations, violations)


def load_trace(path):
    """Read a trace file: one JSON object per line with task/process/start/end."""
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as err:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {err}") from None
    return records
