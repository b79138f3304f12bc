"""Task catalogue, gated progress ledger, and allocation exclusivity."""

import pytest

from tangleguard.tasks import TASK_TABLE, Allocation, Task, TaskGraph


class TestTask:
    def test_catalogue_matches_the_published_table(self):
        durations = {
            1: (6, 6, 1),
            2: (3, 2, 4, 13, 6),
            3: (5, 3),
            4: (2, 7, 5, 4),
            5: (1, 10, 8, 3),
            6: (6, 5, 6, 6, 7, 5),
            7: (2, 5, 4),
            8: (7, 3, 4),
        }
        totals = {1: 13, 2: 28, 3: 8, 4: 18, 5: 22, 6: 35, 7: 11, 8: 14}
        tags = {
            1: "low", 2: "high", 3: "low", 4: "medium",
            5: "medium", 6: "high", 7: "low", 8: "low",
        }
        assert sorted(TASK_TABLE) == list(range(1, 9))
        for tid, task in TASK_TABLE.items():
            assert task.id == tid
            assert task.durations == durations[tid]
            assert task.total_duration == totals[tid]
            assert task.complexity == tags[tid]

    def test_durations_must_be_positive(self):
        with pytest.raises(ValueError):
            Task(9, (3, 0), "low")
        with pytest.raises(ValueError):
            Task(9, (), "low")

    def test_complexity_tag_is_checked(self):
        with pytest.raises(ValueError):
            Task(9, (1,), "extreme")


class TestTaskGraph:
    def graph(self, ids=(3,), extra=()):
        return TaskGraph([TASK_TABLE[i] for i in ids], extra)

    def test_one_node_per_process(self):
        g = self.graph(ids=(1, 3))
        assert sorted(g.nodes()) == [(1, 1), (1, 2), (1, 3), (3, 1), (3, 2)]

    def test_chain_gates_later_processes(self):
        g = self.graph()
        assert g.ready((3, 1))
        assert not g.ready((3, 2))
        with pytest.raises(ValueError):
            g.advance((3, 2))

    def test_completing_a_task_needs_the_full_duration_in_order(self):
        # durations (5, 3): eight on-target steps, gated in sequence
        g = self.graph()
        for step in range(5):
            assert not g.task_done(3)
            g.advance((3, 1))
        assert g.complete((3, 1)) and g.ready((3, 2))
        for _ in range(3):
            assert not g.task_done(3)
            g.advance((3, 2))
        assert g.task_done(3) and g.all_done

    def test_progress_accrues_one_duration_fraction_per_step(self):
        g = self.graph(ids=(1,))
        assert g.advance((1, 1)) == pytest.approx(1 / 6)
        assert g.advance((1, 1), steps=2) == pytest.approx(3 / 6)

    def test_progress_clamps_at_one_and_never_decreases(self):
        g = self.graph()
        g.advance((3, 1), steps=50)
        assert g.progress[(3, 1)] == 1.0
        with pytest.raises(ValueError):
            g.advance((3, 1), steps=-1)

    def test_cross_task_edges_gate_starts(self):
        g = self.graph(ids=(3, 7), extra=[((3, 2), (7, 1))])
        assert not g.ready((7, 1))
        g.advance((3, 1), steps=5)
        g.advance((3, 2), steps=3)
        assert g.ready((7, 1))

    def test_unknown_edge_endpoint_is_rejected(self):
        with pytest.raises(ValueError):
            self.graph(ids=(3,), extra=[((3, 2), (9, 1))])

    def test_cycles_are_rejected(self):
        with pytest.raises(ValueError):
            self.graph(ids=(3, 7), extra=[((3, 1), (7, 1)), ((7, 1), (3, 1))])
        with pytest.raises(ValueError):
            self.graph(ids=(3,), extra=[((3, 2), (3, 1))])

    def test_available_lists_ready_nodes_in_order(self):
        g = self.graph(ids=(1, 3))
        assert g.available() == [(1, 1), (3, 1)]
        g.advance((1, 1), steps=6)
        assert g.available() == [(1, 2), (3, 1)]

    def test_completed_count(self):
        g = self.graph(ids=(1, 3))
        assert g.completed_count == 0
        g.advance((1, 1), steps=6)
        assert g.completed_count == 1

    def test_duplicate_task_ids_rejected(self):
        with pytest.raises(ValueError):
            TaskGraph([TASK_TABLE[1], TASK_TABLE[1]])


class TestAllocation:
    def test_assign_and_lookup(self):
        a = Allocation()
        a.assign(0, (3, 1))
        assert a.get(0) == (3, 1)
        assert a.holder((3, 1)) == 0
        assert a.get(1) is None

    def test_one_process_per_arm(self):
        a = Allocation()
        a.assign(0, (3, 1))
        with pytest.raises(ValueError):
            a.assign(0, (7, 1))

    def test_one_arm_per_process(self):
        a = Allocation()
        a.assign(0, (3, 1))
        with pytest.raises(ValueError):
            a.assign(1, (3, 1))

    def test_release_frees_both_sides(self):
        a = Allocation()
        a.assign(0, (3, 1))
        assert a.release(0) == (3, 1)
        assert a.release(0) is None
        a.assign(1, (3, 1))
        assert a.holder((3, 1)) == 1
