"""Schedule fixtures and the precedence/latency trace validator."""

import pytest

from tangleguard.schedules import (
    SCHEDULE_FIXTURES,
    ScheduleVerdict,
    fixture_trace,
    load_trace,
    validate_schedule,
)


class TestFixtures:
    def test_four_fixtures_cover_all_eight_tasks(self):
        assert sorted(SCHEDULE_FIXTURES) == ["v1", "v2", "v3", "v4"]
        for fixture in SCHEDULE_FIXTURES.values():
            assert sorted(fixture) == list(range(1, 9))

    def test_spans_are_well_formed_and_sequential(self):
        for fixture in SCHEDULE_FIXTURES.values():
            for spans in fixture.values():
                for a, b in spans:
                    assert 1 <= a <= b <= 35
                for (_, e0), (s1, _) in zip(spans, spans[1:]):
                    assert s1 > e0

    def test_fixture_trace_replays_every_span(self):
        trace = fixture_trace("v1")
        assert len(trace) == sum(len(s) for s in SCHEDULE_FIXTURES["v1"].values())
        assert trace[0] == {"task": 1, "process": 1, "start": 2, "end": 2}

    def test_every_fixture_self_validates(self):
        for name in SCHEDULE_FIXTURES:
            verdict = validate_schedule(fixture_trace(name), name)
            assert verdict.ok, (name, verdict.violations)


class TestValidateSchedule:
    def edited(self, name, task, proc, span):
        trace = fixture_trace(name)
        for rec in trace:
            if rec["task"] == task and rec["process"] == proc:
                rec["start"], rec["end"] = span
        return trace

    def test_starting_before_the_predecessor_ends_fails(self):
        # task 2 P2 ends at 5 in v1; pull P3 on top of it
        verdict = validate_schedule(self.edited("v1", 2, 3, (5, 8)), "v1")
        assert not verdict.ok
        assert any("task 2 P3" in v and "before" in v for v in verdict.violations)

    def test_shaving_the_mandated_latency_fails(self):
        # v1 task 1: P1 ends at 2, P2 mandated to wait 3 vacant steps
        verdict = validate_schedule(self.edited("v1", 1, 2, (4, 9)), "v1")
        assert not verdict.ok
        assert any("latency" in v for v in verdict.violations)

    def test_waiting_longer_than_mandated_passes(self):
        verdict = validate_schedule(self.edited("v1", 1, 3, (20, 20)), "v1")
        assert verdict.ok

    def test_missing_predecessor_fails(self):
        trace = [r for r in fixture_trace("v1") if (r["task"], r["process"]) != (3, 1)]
        verdict = validate_schedule(trace, "v1")
        assert not verdict.ok
        assert any("P1 never ran" in v for v in verdict.violations)

    def test_split_process_interval_fails(self):
        trace = fixture_trace("v1") + [
            {"task": 3, "process": 1, "start": 20, "end": 21}
        ]
        verdict = validate_schedule(trace, "v1")
        assert any("split" in v for v in verdict.violations)

    def test_unknown_task_or_process_fails(self):
        bad_task = [{"task": 9, "process": 1, "start": 1, "end": 2}]
        assert not validate_schedule(bad_task, "v1").ok
        bad_proc = [{"task": 3, "process": 5, "start": 1, "end": 2}]
        assert not validate_schedule(bad_proc, "v1").ok

    def test_empty_interval_fails(self):
        trace = self.edited("v1", 3, 2, (11, 9))
        assert any("empty" in v for v in validate_schedule(trace, "v1").violations)

    def test_tuple_records_are_accepted(self):
        trace = [(t["task"], t["process"], t["start"], t["end"]) for t in fixture_trace("v2")]
        assert validate_schedule(trace, "v2").ok

    def test_malformed_records_raise(self):
        with pytest.raises(ValueError):
            validate_schedule([{"task": 1, "process": 1, "start": 2}], "v1")
        with pytest.raises(ValueError):
            validate_schedule([(1, 1, 2)], "v1")
        with pytest.raises(ValueError):
            validate_schedule([(1, 1, "two", 3.5j)], "v1")

    def test_verdict_is_truthy_only_on_pass(self):
        assert ScheduleVerdict(True)
        assert not ScheduleVerdict(False, ["x"])


class TestLoadTrace:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        lines = [
            '{"task": 3, "process": 1, "start": 2, "end": 6}',
            "",
            '{"task": 3, "process": 2, "start": 9, "end": 11}',
        ]
        path.write_text("\n".join(lines) + "\n")
        records = load_trace(path)
        assert len(records) == 2
        assert validate_schedule(records, "v1").ok

    def test_malformed_line_raises_with_position(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        path.write_text('{"task": 3}\nnot json\n')
        with pytest.raises(ValueError, match=":2:"):
            load_trace(path)
