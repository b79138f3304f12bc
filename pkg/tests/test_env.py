"""Multi-arm environment: kinematic plant, constraint projection, topology
bookkeeping, hierarchical rewards, and the rule-based scheduler."""

import numpy as np
import pytest

from tangleguard.env import (
    ARM_OBS_DIM,
    ENTANGLE_DRAG,
    GLOBAL_OBS_DIM,
    ArmAction,
    EpisodeAbort,
    MultiArmEnv,
    SchedulerAction,
    TopScheduler,
    action_from_command,
    make_scenario,
    scenario_from_file,
    scenario_to_file,
)


def fresh(name="low", seed=3, **overrides):
    return MultiArmEnv(make_scenario(name, seed=seed, **overrides)).reset()


def zero_actions(env):
    n = env.config.n_nodes
    return {
        j: ArmAction(np.zeros((n, 3))) for j in range(env.config.n_arms)
    }


def drive_actions(env, goals, gain=4.0):
    acts = {}
    for j in range(env.config.n_arms):
        err = goals[j] - env.tip(j)
        cmd = np.concatenate([gain * err, [3.0]])
        acts[j] = action_from_command(cmd, env.config.n_nodes, env.config.v_max)
    return acts


def exchange_goals(env):
    # paired overshoots past the partner's base, transversal in projection,
    # staggered z: the canonical confirmed-entanglement maneuver
    bases = np.array([a.centerline.points[0] for a in env.arms])
    offsets = np.array([
        [1.3, 0.30, 0.45],
        [-1.1, 0.60, 0.80],
        [1.3, 0.30, 0.45],
        [-1.1, 0.60, 0.80],
    ])
    return bases + offsets[: len(bases)]


class TestScenarioConfig:
    def test_known_names_and_alias(self):
        assert make_scenario("low").n_arms == 4
        assert make_scenario("med").name == "medium"
        assert make_scenario("high").n_obstacles == 24

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError):
            make_scenario("extreme")

    def test_invalid_overrides_rejected(self):
        with pytest.raises(ValueError):
            make_scenario("low", dt=0.0)
        with pytest.raises(ValueError):
            make_scenario("low", horizon=0)
        with pytest.raises(ValueError):
            make_scenario("low", task_ids=(42,))
        with pytest.raises(ValueError):
            make_scenario("low", n_min=9)
        with pytest.raises(ValueError):
            make_scenario("low", beta=-1.0)

    def test_turn_limit_matches_curvature_bound(self):
        cfg = make_scenario("low")
        # kappa = 2 sin(theta/2) / s for equal segments
        kappa = 2.0 * np.sin(cfg.turn_limit / 2.0) / cfg.segment
        assert kappa == pytest.approx(cfg.kappa_max, abs=1e-12)

    def test_config_file_round_trip(self, tmp_path):
        cfg = make_scenario("medium", seed=11, horizon=120, beta=2.0)
        path = tmp_path / "scenario.json"
        scenario_to_file(cfg, path)
        assert scenario_from_file(path) == cfg


class TestFixedPoint:
    def test_zero_actions_leave_state_bit_identical(self):
        env = fresh()
        before = [a.centerline.points.copy() for a in env.arms]
        res = env.step(SchedulerAction(), zero_actions(env))
        for prev, arm in zip(before, env.arms):
            assert np.array_equal(prev, arm.centerline.points)
        assert env.step_count == 1
        assert len(env.braid) == 0
        assert not res.done

    def test_zero_actions_yield_penalties_only(self):
        env = fresh()
        res = env.step(SchedulerAction(), zero_actions(env))
        # R^s = alpha*0 - beta*risk; R^a = -kappa*phi_local, nothing positive
        assert res.reward_scheduler == pytest.approx(-env.config.beta * env.topo.risk)
        assert (res.rewards_arms <= 1e-12).all()


class TestProgressArithmetic:
    def pin_target(self, env, node, arm=0):
        # park the node's target exactly on the arm's tip
        idx = (node[0] - 1) % len(env.workspace.targets)
        env.workspace.targets[idx] = env.tip(arm).copy()

    def test_on_target_arm_gains_one_over_duration_per_step(self):
        env = fresh()
        node = (3, 1)  # durations (5, 3)
        self.pin_target(env, node)
        env.allocation.assign(0, node)
        for k in range(1, 5):
            env.step(SchedulerAction(), zero_actions(env))
            assert env.graph.progress[node] == pytest.approx(k / 5)

    def test_task3_needs_eight_on_target_steps_in_order(self):
        env = fresh()
        self.pin_target(env, (3, 1))
        env.allocation.assign(0, (3, 1))
        on_target = 0
        while not env.graph.complete((3, 1)):
            assert (3, 2) not in env.graph.available()  # C6 gate
            env.step(SchedulerAction(), zero_actions(env))
            on_target += 1
        assert env.allocation.get(0) is None  # completion releases the arm
        env.allocation.assign(0, (3, 2))
        while not env.graph.task_done(3):
            env.step(SchedulerAction(), zero_actions(env))
            on_target += 1
        assert on_target == 8

    def test_completion_step_reward_arithmetic(self):
        env = fresh()
        node = (3, 2)
        self.pin_target(env, (3, 1))
        env.allocation.assign(0, (3, 1))
        for _ in range(4):
            env.step(SchedulerAction(), zero_actions(env))
        res = env.step(SchedulerAction(), zero_actions(env))  # completes (3,1)
        assert [n for _, n in res.events.completions] == [(3, 1)]
        assert res.reward_scheduler == pytest.approx(
            10.0 + env.config.alpha * (1 / env.config.n_arms)
            - env.config.beta * env.topo.risk
        )
        # the yield unlocked (3,2): collaboration credit on the finisher
        assert res.events.enabled == {(3, 1): [node]}
        row_lk = float(np.abs(env.topo.linking[0]).max())
        local_pen = env.config.coeffs.alpha1 * row_lk
        assert res.rewards_arms[0] == pytest.approx(
            env.config.xi * 1.0 - env.config.kappa * local_pen, abs=1e-12
        )

    def test_progress_is_monotone_under_random_actions(self):
        env = fresh(seed=5)
        sched = TopScheduler(env)
        rng = np.random.default_rng(2)
        seen = {n: 0.0 for n in env.graph.nodes()}
        for _ in range(40):
            acts = {
                j: action_from_command(
                    rng.uniform(-1, 1, 4), env.config.n_nodes, env.config.v_max
                )
                for j in range(env.config.n_arms)
            }
            env.step(sched.act(), acts)
            for n, p in env.graph.progress.items():
                assert p >= seen[n]
                seen[n] = p


class TestConstraints:
    def test_fresh_scenarios_satisfy_everything(self):
        for name in ("low", "medium", "high"):
            reports = fresh(name, seed=1).check_constraints()
            assert all(r["ok"] for r in reports.values()), reports

    def test_projection_holds_c2_to_c5_under_violent_commands(self):
        env = fresh(seed=7)
        rng = np.random.default_rng(0)
        for _ in range(30):
            acts = {
                j: ArmAction(rng.uniform(-40, 40, (env.config.n_nodes, 3)))
                for j in range(env.config.n_arms)
            }
            env.step(SchedulerAction(), acts)
            reports = env.check_constraints()
            for key in ("C2", "C3", "C4", "C5"):
                assert reports[key]["ok"], (key, reports[key])
        assert env.projection_count > 0

    def test_node_inside_obstacle_fails_c1_with_negative_margin(self):
        from tangleguard.geometry import Obstacle

        env = fresh()
        env.workspace.obstacles.append(Obstacle(env.tip(0).copy(), 0.1))
        report = env.check_constraints()["C1"]
        assert not report["ok"]
        assert report["margin"] < 0.0

    def test_duplicate_process_fails_c7(self):
        env = fresh()
        node = env.graph.available()[0]
        env.allocation.assign(0, node)
        env.allocation.assignment[1] = node  # bypass the guarded API
        report = env.check_constraints()["C7"]
        assert not report["ok"]
        assert report["margin"] == -1.0

    def test_allocation_api_itself_refuses_c7_c8(self):
        env = fresh()
        node = env.graph.available()[0]
        env.allocation.assign(0, node)
        with pytest.raises(ValueError):
            env.allocation.assign(1, node)
        with pytest.raises(ValueError):
            env.allocation.assign(0, env.graph.available()[1])


class TestDeterminism:
    def roll(self, seed_actions=11):
        env = fresh(seed=4)
        sched = TopScheduler(env)
        rng = np.random.default_rng(seed_actions)
        rewards = []
        for _ in range(25):
            acts = {
                j: action_from_command(
                    rng.uniform(-1, 1, 4), env.config.n_nodes, env.config.v_max
                )
                for j in range(env.config.n_arms)
            }
            res = env.step(sched.act(), acts)
            rewards.append(res.reward_scheduler)
        return env, rewards

    def test_same_seed_and_script_is_bit_identical(self):
        a, ra = self.roll()
        b, rb = self.roll()
        assert ra == rb
        assert a.braid.letters == b.braid.letters
        for x, y in zip(a.arms, b.arms):
            assert np.array_equal(x.centerline.points, y.centerline.points)


class TestAborts:
    def test_nan_velocity_aborts_the_episode(self):
        env = fresh()
        acts = zero_actions(env)
        bad = np.zeros((env.config.n_nodes, 3))
        bad[3, 1] = np.nan
        acts[2] = ArmAction(bad)
        with pytest.raises(EpisodeAbort):
            env.step(SchedulerAction(), acts)


class TestEntanglement:
    def wound_env(self, steps=45):
        env = fresh(seed=5)
        goals = exchange_goals(env)
        for _ in range(steps):
            env.step(SchedulerAction(), drive_actions(env, goals))
        return env

    def test_exchange_hold_confirms_entanglement(self):
        env = self.wound_env()
        assert len(env.braid) >= 4
        assert env.detector.entangled
        assert np.abs(env._closed_lk).max() >= 0.8
        assert env.flagged_arms()

    def test_braid_history_ratchets_while_crossings_persist(self):
        env = fresh(seed=5)
        goals = exchange_goals(env)
        lengths = []
        for _ in range(45):
            env.step(SchedulerAction(), drive_actions(env, goals))
            lengths.append(len(env.braid))
        assert lengths[-1] >= 4
        assert all(b >= a for a, b in zip(lengths, lengths[1:]))

    def test_flagged_arms_are_dragged_and_blocked(self):
        env = self.wound_env()
        flagged = env.flagged_arms()
        node = env.graph.available()[0]
        idx = (node[0] - 1) % len(env.workspace.targets)
        env.workspace.targets[idx] = env.tip(flagged[0]).copy()
        env.allocation.assign(flagged[0], node)
        goals = exchange_goals(env)
        env.step(SchedulerAction(), drive_actions(env, goals))
        assert env.graph.progress[node] == 0.0  # wound arms do no work
        cap = ENTANGLE_DRAG * env.config.v_max
        for j in env.flagged_arms():
            speeds = np.linalg.norm(env.arms[j].velocities, axis=1)
            assert speeds.max() <= cap + 1e-9

    def test_entangled_indicator_costs_five_beta_on_the_scheduler(self):
        plain = fresh(seed=6)
        marked = fresh(seed=6)
        marked.detector.update = lambda lk, bl: True
        marked.detector.entangled = True
        r_plain = plain.step(SchedulerAction(), zero_actions(plain))
        r_marked = marked.step(SchedulerAction(), zero_actions(marked))
        drop = r_plain.reward_scheduler - r_marked.reward_scheduler
        assert drop == pytest.approx(
            plain.config.beta * plain.config.coeffs.alpha3, abs=1e-9
        )


class TestScheduler:
    def test_fills_arms_with_reachable_nearest_nodes(self):
        env = fresh(seed=3)
        action = TopScheduler(env).act()
        assert action.assignments
        reach = 0.9 * env.config.arm_length
        for arm, node in action.assignments:
            base = env.rest[arm][0]
            assert np.linalg.norm(env.target_of(node) - base) <= reach

    def test_concurrency_budget_caps_active_arms(self):
        env = fresh(seed=3, n_min=2, conc_alpha=0.5)
        sched = TopScheduler(env)
        env.step(sched.act(), zero_actions(env))
        # fake a thick braid history: budget must clamp down to n_min
        from tangleguard.braid import BraidWord

        env.braid = BraidWord(((1, 1),) * 40, env.config.n_arms)
        action = sched.act()
        assert action.concurrency == env.config.n_min
        env.step(action, zero_actions(env))
        assert len(env.allocation.assignment) <= env.config.n_min

    def test_replan_releases_and_avoids_the_old_node(self):
        env = fresh(seed=3)
        sched = TopScheduler(env)
        env.step(sched.act(), zero_actions(env))
        old = env.allocation.get(0)
        assert old is not None
        action = sched.act(replan_arms=[0])
        assert 0 in action.releases
        assert action.replanned_arms == [0]
        for arm, node in action.assignments:
            if arm == 0:
                assert node != old

    def test_replan_shrinks_the_budget_for_a_window(self):
        env = fresh(seed=3)
        sched = TopScheduler(env)
        quiet = sched.act().concurrency
        hot = sched.act(replan_arms=[1]).concurrency
        assert hot == max(env.config.n_min, quiet - 1)

    def test_flat_ablation_keeps_every_arm_active(self):
        env = fresh(seed=3, hierarchical_control=False)
        action = TopScheduler(env).act()
        assert action.concurrency is None
        assert action.releases == []
        assert action.replanned_arms == []

    def test_greedy_rollout_completes_every_task(self):
        env = fresh(seed=3, horizon=400)
        sched = TopScheduler(env)
        for _ in range(400):
            acts = {}
            for j in range(env.config.n_arms):
                node = env.allocation.get(j)
                if node is None:
                    acts[j] = ArmAction(np.zeros((env.config.n_nodes, 3)))
                else:
                    err = env.target_of(node) - env.tip(j)
                    cmd = np.concatenate([3.0 * err, [2.0]])
                    acts[j] = action_from_command(
                        cmd, env.config.n_nodes, env.config.v_max
                    )
            if env.step(sched.act(), acts).done:
                break
        assert env.graph.all_done


class TestObservations:
    def test_shapes_and_finiteness(self):
        env = fresh(seed=2)
        sched = TopScheduler(env)
        env.step(sched.act(), zero_actions(env))
        for j in range(env.config.n_arms):
            obs = env.arm_obs_vector(j)
            assert obs.shape == (ARM_OBS_DIM,)
            assert np.isfinite(obs).all()
        gobs = env.global_obs_vector()
        assert gobs.shape == (GLOBAL_OBS_DIM,)
        assert np.isfinite(gobs).all()

    def test_preview_risk_commits_nothing(self):
        env = fresh(seed=2)
        before = [a.centerline.points.copy() for a in env.arms]
        action = action_from_command(
            np.array([0.4, 0.2, 0.1, 1.0]), env.config.n_nodes, env.config.v_max
        )
        risk = env.preview_risk(0, action)
        assert np.isfinite(risk)
        assert risk >= 0.0
        for prev, arm in zip(before, env.arms):
            assert np.array_equal(prev, arm.centerline.points)
        bad = ArmAction(np.full((env.config.n_nodes, 3), np.nan))
        assert np.isnan(env.preview_risk(0, bad))

    def test_conservative_action_pulls_toward_rest(self):
        env = fresh(seed=5)
        goals = exchange_goals(env)
        for _ in range(20):
            env.step(SchedulerAction(), drive_actions(env, goals))
        dist_before = float(
            np.linalg.norm(env.arms[0].centerline.points - env.rest[0])
        )
        for _ in range(30):
            acts = {j: env.conservative_action(j) for j in range(env.config.n_arms)}
            env.step(SchedulerAction(), acts)
        dist_after = float(
            np.linalg.norm(env.arms[0].centerline.points - env.rest[0])
        )
        assert dist_after < dist_before
