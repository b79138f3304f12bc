"""Hierarchical multi-arm environment with topology-aware scheduling.

Arms are discretized centerlines anchored to the floor, stepped by explicit
first-order kinematics with constraint projection. The projection rebuilds
each arm by walking from the base with fixed segment lengths and a clamped
turning angle, keeping speed, curvature, arc length, and containment exact
after every step; a geometric corner the walk cannot resolve freezes the arm
at its previous valid state instead of emitting a violating one. Collisions
with obstacles are an outcome that is counted, never a crash.

The episode braid word is the crossing history at event granularity: a
letter is appended when a crossing appears in the projected diagram, not for
every step it persists, so the word length counts distinct crossing events
and weaving traffic accumulates topological debt that holding still does
not. Linking and writhe are recomputed every step; a persistence detector
confirms entanglement on virtually closed arms once the word is long enough
to bother closing them, and confirmed arms move at a fraction of their speed
until the hold clears.

A rule-based scheduler allocates catalogue processes to arms under the
topology-derived concurrency budget and reassigns flagged arms when the
safety layer requests replanning.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .braid import BraidFault, BraidWord, append_crossings, simplify
from .geometry import ArmState, Obstacle, Polyline, Workspace, containment_margin, \
    curvature_profile, min_obstacle_clearance
from .safety import RiskCoeffs, concurrency_budget, risk_score
from .tasks import TASK_TABLE, Allocation, TaskGraph
from .topology import EntanglementDetector, close_polyline, detect_crossings, \
    linking_matrix, linking_row, topo_state

ARM_OBS_DIM = 14
GLOBAL_OBS_DIM = 9
ACTION_DIM = 4  # tip velocity (3) + speed-limit fraction
ENTANGLE_DRAG = 0.25  # speed cap factor on arms in a confirmed hold

SCENARIOS = {
    "low": dict(n_arms=4, n_targets=4, n_obstacles=6, task_ids=(1, 3, 7, 8)),
    "medium": dict(n_arms=6, n_targets=6, n_obstacles=12,
                   task_ids=(1, 3, 4, 5, 7, 8)),
    "high": dict(n_arms=10, n_targets=8, n_obstacles=24,
                 task_ids=(1, 2, 3, 4, 5, 6, 7, 8)),
}
_ALIASES = {"med": "medium"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that defines one episode family; invalid values refuse to build."""

    name: str
    n_arms: int
    n_targets: int
    n_obstacles: int
    task_ids: tuple
    seed: int = 0
    n_nodes: int = 9
    segment: float = 0.25  # m
    dt: float = 0.1  # s
    v_max: float = 0.5  # m/s
    kappa_max: float = 2.0  # 1/m
    reach_radius: float = 0.05  # m
    horizon: int = 80
    coeffs: RiskCoeffs = field(default_factory=RiskCoeffs)
    # reward weights: alpha throughput, beta risk, eta safety, xi collaboration,
    # kappa local topology penalty
    alpha: float = 1.0
    beta: float = 1.0
    eta: float = 1.0
    xi: float = 1.0
    kappa: float = 1.0
    n_min: int = 2
    conc_alpha: float = 0.25
    replan_budget_steps: int = 10
    hierarchical_control: bool = True

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario: {self.name!r}")
        if self.n_arms < 2 or self.n_nodes < 3:
            raise ValueError("need at least two arms of three nodes each")
        if not self.task_ids or not set(self.task_ids) <= set(TASK_TABLE):
            raise ValueError("task_ids must come from the task catalogue")
        if min(self.dt, self.v_max, self.segment, self.kappa_max,
               self.reach_radius) <= 0:
            raise ValueError("kinematic parameters must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one step")
        if not 1 <= self.n_min <= self.n_arms:
            raise ValueError("need 1 <= n_min <= n_arms")
        if self.conc_alpha < 0 or self.replan_budget_steps < 0:
            raise ValueError("concurrency parameters must be non-negative")
        if min(self.alpha, self.beta, self.eta, self.xi, self.kappa) < 0:
            raise ValueError("reward weights must be non-negative")

    @property
    def arm_length(self) -> float:
        return self.segment * (self.n_nodes - 1)

    @property
    def turn_limit(self) -> float:
        """Largest angle between consecutive segments equivalent to kappa_max."""
        return 2.0 * np.arcsin(min(1.0, self.kappa_max * self.segment / 2.0))


def make_scenario(name: str, seed: int = 0, **overrides) -> ScenarioConfig:
    name = _ALIASES.get(name, name)
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario: {name!r} (want low, medium, or high)")
    base = dict(SCENARIOS[name], name=name, seed=seed)
    base.update(overrides)
    return ScenarioConfig(**base)


def scenario_to_file(cfg: ScenarioConfig, path) -> None:
    """Write a scenario config as JSON; scenario_from_file round-trips it."""
    payload = asdict(cfg)
    payload["task_ids"] = list(cfg.task_ids)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def scenario_from_file(path) -> ScenarioConfig:
    with open(path) as fh:
        payload = json.load(fh)
    payload["task_ids"] = tuple(payload["task_ids"])
    payload["coeffs"] = RiskCoeffs(**payload["coeffs"])
    return ScenarioConfig(**payload)


@dataclass
class ArmAction:
    """Per-node velocity command plus local shaping knobs."""

    velocities: np.ndarray  # (n_nodes, 3) m/s
    orientation_adjust: np.ndarray = None  # axis-angle, applied to all frames
    curvature_target: float = 0.0  # 0 keeps the scenario bound
    speed_limit: float = np.inf

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.orientation_adjust is None:
            self.orientation_adjust = np.zeros(3)
        self.orientation_adjust = np.asarray(self.orientation_adjust, dtype=float)

    def scaled(self, factor: float) -> "ArmAction":
        return ArmAction(self.velocities * factor, self.orientation_adjust.copy(),
                         self.curvature_target, self.speed_limit * factor)


_RAMPS = {}


def action_from_command(cmd, n_nodes: int, v_max: float) -> ArmAction:
    """Expand a policy command [tip velocity, speed fraction] to a ramp profile."""
    cmd = np.asarray(cmd, dtype=float).reshape(ACTION_DIM)
    tip = cmd[:3]
    speed = float(np.linalg.norm(tip))
    if speed > v_max:
        tip = tip * (v_max / speed)
    ramp = _RAMPS.get(n_nodes)
    if ramp is None:
        ramp = _RAMPS[n_nodes] = np.linspace(0.0, 1.0, n_nodes)[:, None]
    frac = 0.1 + 0.9 * (math.tanh(cmd[3]) + 1.0) / 2.0
    return ArmAction(ramp * tip, speed_limit=float(v_max * frac))


@dataclass
class SchedulerAction:
    """Allocation edits plus the broadcast coordination knobs."""

    assignments: list = field(default_factory=list)  # (arm, (task, process))
    releases: list = field(default_factory=list)
    concurrency: int = None  # None means every arm may act
    replanned_arms: list = field(default_factory=list)


@dataclass
class EventLog:
    completions: list = field(default_factory=list)  # (arm, node) finished now
    enabled: dict = field(default_factory=dict)  # finished node -> unlocked nodes
    progressing_arms: list = field(default_factory=list)
    interventions: dict = field(default_factory=dict)  # arm -> screening decision
    collisions: int = 0
    replans: list = field(default_factory=list)
    frozen_arms: list = field(default_factory=list)


@dataclass
class StepResult:
    reward_scheduler: float
    rewards_arms: np.ndarray
    topo: object
    events: EventLog
    done: bool
    crossings_seen: int


class EpisodeAbort(RuntimeError):
    """Raised when the state goes non-finite or the braid engine gives up."""


class MultiArmEnv:
    """Deterministic kinematic simulator; same seed and actions, same bits."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self._seed = config.seed
        self.reset()

    # -- construction ------------------------------------------------------

    def reset(self, seed: int = None):
        cfg = self.config
        if seed is not None:
            self._seed = seed
        rng = np.random.default_rng(self._seed)
        length = cfg.arm_length
        # bases in a row along x: strand order equals physical adjacency, and
        # neighboring workspaces overlap so arms must share the strips between
        spacing = 0.6 * length
        line_half = 0.5 * spacing * (cfg.n_arms - 1)
        half_x = line_half + length + 0.1
        half_y = length + 0.1
        bounds = np.array([[-half_x, -half_y, 0.0], [half_x, half_y, length + 0.1]])
        xs = np.linspace(-line_half, line_half, cfg.n_arms)
        bases = np.stack([xs, np.zeros(cfg.n_arms), np.zeros(cfg.n_arms)], axis=1)
        self.rest = [
            base + np.linspace(0.0, 1.0, cfg.n_nodes)[:, None] * [0, 0, length]
            for base in bases
        ]
        self.arms = [ArmState(Polyline(r.copy())) for r in self.rest]
        targets = self._sample_targets(rng, bases, length)
        obstacles = self._sample_obstacles(rng, targets, bounds)
        self.workspace = Workspace(bounds, obstacles, targets)
        self.graph = TaskGraph([TASK_TABLE[i] for i in cfg.task_ids])
        self.allocation = Allocation()
        self.braid = BraidWord((), cfg.n_arms)
        self.detector = EntanglementDetector()
        self.step_count = 0
        self.collision_count = 0
        self.frozen_count = 0
        self.projection_count = 0  # raw actions that needed constraint projection
        self._prev_scan = Counter()
        self._prev_dists = np.full(cfg.n_arms, np.nan)
        self._ready_before = set(self.graph.available())
        self._closed_lk = np.zeros((cfg.n_arms, cfg.n_arms))
        self.topo = self._topo_state()
        return self

    def _sample_targets(self, rng, bases, length):
        cfg = self.config
        # stations live in the contended interior between the outermost bases,
        # so arms routinely work inside their neighbors' strips
        x_lo, x_hi = bases[:, 0].min(), bases[:, 0].max()
        y_spread = 0.8 * length
        targets = []
        while len(targets) < cfg.n_targets:
            x = rng.uniform(x_lo, x_hi)
            y = rng.uniform(-y_spread, y_spread)
            z = rng.uniform(0.35 * length, 0.9 * length)
            p = np.array([x, y, z])
            if np.linalg.norm(bases - p, axis=1).min() < 0.85 * length:
                targets.append(p)
        return np.stack(targets)

    def _sample_obstacles(self, rng, targets, bounds):
        cfg = self.config
        obstacles = []
        tries = 0
        while len(obstacles) < cfg.n_obstacles and tries < 20_000:
            tries += 1
            r = float(rng.uniform(0.08, 0.22))
            c = rng.uniform(bounds[0] + r, bounds[1] - r)
            c[2] = float(max(c[2], r + 0.05))
            ob = Obstacle(c, r)
            if np.linalg.norm(targets - c, axis=1).min() < r + 0.2:
                continue
            probe = Workspace(bounds, [ob])
            if any(min_obstacle_clearance(a, probe) < 0.05 for a in self.arms):
                continue
            obstacles.append(ob)
        return obstacles

    # -- scheduling helpers --------------------------------------------------

    def target_of(self, node) -> np.ndarray:
        """Workspace point where a (task, process) node is worked on."""
        return self.workspace.targets[(node[0] - 1) % len(self.workspace.targets)]

    def arm_target(self, arm: int):
        node = self.allocation.get(arm)
        return None if node is None else self.target_of(node)

    def tip(self, arm: int) -> np.ndarray:
        return self.arms[arm].centerline.points[-1]

    def idle_arms(self) -> list:
        return [j for j in range(self.config.n_arms) if self.allocation.get(j) is None]

    def flagged_arms(self) -> list:
        pairs = self.detector.flagged_pairs(self._closed_lk)
        return sorted({j for pair in pairs for j in pair})

    # -- risk plumbing ---------------------------------------------------------

    def _topo_state(self):
        return topo_state(
            [a.centerline for a in self.arms], len(self.braid),
            self.detector.entangled, self.config.coeffs,
        )

    def _risk_with_arm(self, arm: int, points: np.ndarray) -> float:
        lk = self.topo.linking.copy()
        others = [k for k in range(self.config.n_arms) if k != arm]
        row = linking_row(points, [self.arms[k].centerline.points for k in others])
        lk[arm, others] = lk[others, arm] = row
        return risk_score(float(np.abs(lk).max()), len(self.braid),
                          self.detector.entangled, self.config.coeffs)

    def preview_risk(self, arm: int, action: ArmAction) -> float:
        """Lookahead risk of one arm's candidate action; nothing is committed."""
        v = np.asarray(action.velocities, dtype=float)
        if not np.isfinite(v).all():
            return float("nan")
        moved, _, _ = self._project(self.arms[arm].centerline.points, action)
        return self._risk_with_arm(arm, moved)

    def conservative_action(self, arm: int) -> ArmAction:
        """Retraction: pull every node toward the rest pose at half speed."""
        cfg = self.config
        pull = (self.rest[arm] - self.arms[arm].centerline.points) / cfg.dt
        speed = np.linalg.norm(pull, axis=1, keepdims=True)
        cap = 0.5 * cfg.v_max
        pull = np.where(speed > cap, pull * (cap / np.where(speed > 0, speed, 1.0)),
                        pull)
        return ArmAction(pull, speed_limit=cap)

    # -- kinematics --------------------------------------------------------------

    def _project(self, points, action: ArmAction):
        """One integration step with exact constraint projection.

        Clamps node speeds, integrates, then rebuilds the arm with a two-pass
        reaching projection: a backward pass from the commanded tip pulls the
        chain toward the integrated positions, a forward pass from the
        anchored base restores exact segment lengths, clamps the turn between
        consecutive segments to the curvature-equivalent angle, and keeps
        nodes inside the box by trading displacement between axes at fixed
        step length. Returns the new points, the clamped velocity command,
        and whether any projection engaged; a corner with no admissible step
        returns the input unchanged (freeze).
        """
        cfg = self.config
        lo, hi = self.workspace.bounds
        v = np.asarray(action.velocities, dtype=float)
        if v.shape != points.shape:
            raise ValueError("action velocities must match the arm nodes")
        cap = min(cfg.v_max, action.speed_limit)
        speed = np.linalg.norm(v, axis=1, keepdims=True)
        touched = bool((speed[:, 0] > cap + 1e-12).any())
        v = np.where(speed > cap, v * (cap / np.where(speed > 0, speed, 1.0)), v)
        if not v.any():
            return points.copy(), v, touched
        raw = points + cfg.dt * v
        raw[0] = points[0]  # base anchored
        turn = cfg.turn_limit
        if action.curvature_target > 0:
            kmax = min(cfg.kappa_max, action.curvature_target)
            turn = 2.0 * np.arcsin(min(1.0, kmax * cfg.segment / 2.0))
        cos_turn = math.cos(turn)
        seg = cfg.segment
        n = len(raw)
        lo0, lo1, lo2 = lo
        hi0, hi1, hi2 = hi
        rawl = raw.tolist()
        # backward reach: honor the commanded tip, drag the chain behind it
        back = [None] * n
        back[-1] = rawl[-1]
        for i in range(n - 2, -1, -1):
            px, py, pz = back[i + 1]
            dx = rawl[i][0] - px
            dy = rawl[i][1] - py
            dz = rawl[i][2] - pz
            nrm = math.sqrt(dx * dx + dy * dy + dz * dz)
            if nrm >= 1e-12:
                f = seg / nrm
                back[i] = [px + dx * f, py + dy * f, pz + dz * f]
            else:
                back[i] = [px, py, pz - seg]
        # forward reach from the anchor restores feasibility exactly
        out = [rawl[0]]
        prev = None
        for i in range(1, n):
            ox, oy, oz = out[i - 1]
            dx = back[i][0] - ox
            dy = back[i][1] - oy
            dz = back[i][2] - oz
            nrm = math.sqrt(dx * dx + dy * dy + dz * dz)
            if nrm < 1e-12:
                dx, dy, dz = prev if prev is not None else (0.0, 0.0, 1.0)
            else:
                dx /= nrm
                dy /= nrm
                dz /= nrm
            if prev is not None:
                cosang = dx * prev[0] + dy * prev[1] + dz * prev[2]
                if cosang < cos_turn:
                    rot = _rotate_toward(np.array([dx, dy, dz]), np.asarray(prev), turn)
                    dx, dy, dz = float(rot[0]), float(rot[1]), float(rot[2])
                    touched = True
            cx = ox + seg * dx
            cy = oy + seg * dy
            cz = oz + seg * dz
            if lo0 <= cx <= hi0 and lo1 <= cy <= hi1 and lo2 <= cz <= hi2:
                out.append([cx, cy, cz])
                prev = (dx, dy, dz)
                continue
            anchor = np.array([ox, oy, oz])
            fixed = _box_fix(np.array([cx, cy, cz]), anchor, seg, lo, hi)
            if fixed is None:
                return points.copy(), v, True  # freeze at the last valid state
            touched = True
            d = (fixed - anchor) / seg
            if prev is not None:
                cosang = float(np.clip(d @ np.asarray(prev), -1.0, 1.0))
                if np.arccos(cosang) > turn + 1e-9:
                    return points.copy(), v, True
            out.append([float(fixed[0]), float(fixed[1]), float(fixed[2])])
            prev = (float(d[0]), float(d[1]), float(d[2]))
        return np.asarray(out), v, touched

    # -- stepping ------------------------------------------------------------------

    def step(self, scheduler_action, arm_actions: dict,
             interventions: dict = None) -> StepResult:
        """Advance one tick; arm actions are assumed pre-screened by the caller."""
        cfg = self.config
        events = EventLog()
        events.interventions = dict(interventions or {})
        if scheduler_action is not None:
            self._apply_schedule(scheduler_action, events)
        self._apply_motion(arm_actions, events)
        crossings = self._update_topology()
        self._advance_tasks(events)
        self._tally_collisions(events)
        reward_s, rewards_a = self._rewards(events, arm_actions)
        self.step_count += 1
        done = self.graph.all_done or self.step_count >= cfg.horizon
        return StepResult(reward_s, rewards_a, self.topo, events, done, crossings)

    def _apply_schedule(self, action: SchedulerAction, events):
        for arm in action.releases:
            self.allocation.release(arm)
            self._prev_dists[arm] = np.nan
        for arm, node in action.assignments:
            self.allocation.assign(arm, node)
            self._prev_dists[arm] = np.nan
        events.replans = list(action.replanned_arms)

    def _apply_motion(self, arm_actions, events):
        dragged = set(self.flagged_arms())
        for arm, action in sorted(arm_actions.items()):
            v = np.asarray(action.velocities, dtype=float)
            if not np.isfinite(v).all():
                raise EpisodeAbort(
                    f"non-finite velocity command on arm {arm} at step {self.step_count}"
                )
            if arm in dragged:
                # wound arms slow each other down until the hold clears
                cap = ENTANGLE_DRAG * self.config.v_max
                action = ArmAction(action.velocities, action.orientation_adjust,
                                   action.curvature_target,
                                   min(action.speed_limit, cap))
            state = self.arms[arm]
            before = state.centerline.points
            pts, clamped, touched = self._project(before, action)
            if not np.isfinite(pts).all():
                raise EpisodeAbort(
                    f"non-finite state on arm {arm} at step {self.step_count}"
                )
            if touched:
                self.projection_count += 1
            if v.any() and np.array_equal(pts, before):
                self.frozen_count += 1
                events.frozen_arms.append(arm)
            state.centerline = Polyline(pts)
            # C2 lives on the commanded velocities; the walk only redistributes
            state.velocities = clamped
            adj = np.asarray(action.orientation_adjust, dtype=float)
            angle = float(np.linalg.norm(adj))
            if angle > 1e-12:
                state.orientations = _rotate_frames(state.orientations, adj, angle)

    def _snapshot_crossings(self):
        return detect_crossings(
            [a.centerline for a in self.arms], np.array([0.0, 0.0, 1.0]),
            time_step=self.step_count,
        )

    def _update_topology(self) -> int:
        cfg = self.config
        scan = self._snapshot_crossings()
        # history accumulates at event granularity: only crossings that were
        # not in the previous frame's diagram append letters
        seen = Counter((ev.strand_index, ev.sign) for ev in scan)
        budget = seen - self._prev_scan
        fresh = []
        for ev in scan:
            key = (ev.strand_index, ev.sign)
            if budget.get(key, 0) > 0:
                budget[key] -= 1
                fresh.append(ev)
        self._prev_scan = seen
        try:
            self.braid, _ = simplify(append_crossings(self.braid, fresh))
        except BraidFault as fault:
            raise EpisodeAbort(f"braid rewriting gave up: {fault}") from None
        # virtual closure only while crossings are live or a hold is confirmed:
        # without live crossings the closed curves cannot stay threaded
        live = len(scan) > 0 or self.detector.entangled
        if live and len(self.braid) >= self.detector.braid_threshold:
            closed = [
                close_polyline(a.centerline, depth=2.0 + 0.37 * k,
                               max_segment=2.0 * cfg.segment)
                for k, a in enumerate(self.arms)
            ]
            self._closed_lk = linking_matrix(closed)
        else:
            self._closed_lk = np.zeros((cfg.n_arms, cfg.n_arms))
        self.detector.update(self._closed_lk, len(self.braid))
        self.topo = self._topo_state()
        if not np.isfinite(self.topo.risk):
            raise EpisodeAbort(f"non-finite risk at step {self.step_count}")
        return len(scan)

    def _advance_tasks(self, events):
        cfg = self.config
        blocked = set(self.flagged_arms())  # wound arms cannot do precision work
        for arm, node in sorted(self.allocation.assignment.items()):
            if arm in blocked or self.graph.complete(node):
                continue
            dist = float(np.linalg.norm(self.tip(arm) - self.target_of(node)))
            if dist <= cfg.reach_radius:
                self.graph.advance(node)
                events.progressing_arms.append(arm)
                if self.graph.complete(node):
                    events.completions.append((arm, node))
                    self.allocation.release(arm)
                    self._prev_dists[arm] = np.nan
        ready_now = set(self.graph.available())
        newly = ready_now - self._ready_before
        for _arm, node in events.completions:
            unlocked = sorted(n for n in newly if node in self.graph.predecessors(n))
            if unlocked:
                events.enabled[node] = unlocked
        self._ready_before = ready_now

    def _tally_collisions(self, events):
        for arm in self.arms:
            if min_obstacle_clearance(arm, self.workspace) < 0:
                events.collisions += 1
        self.collision_count += events.collisions

    # -- rewards --------------------------------------------------------------------

    def _local_braid_lengths(self) -> np.ndarray:
        """Letters of the simplified word touching each arm's strand."""
        counts = np.zeros(self.config.n_arms)
        for idx, _exp in self.braid.letters:
            counts[idx - 1] += 1.0
            counts[idx] += 1.0
        return counts

    def _rewards(self, events, arm_actions):
        cfg = self.config
        n = cfg.n_arms
        r_task = 10.0 * len(events.completions)
        r_throughput = len(set(events.progressing_arms)) / n
        reward_s = r_task + cfg.alpha * r_throughput - cfg.beta * self.topo.risk

        dists = np.full(n, np.nan)
        for j in range(n):
            target = self.arm_target(j)
            if target is not None:
                dists[j] = np.linalg.norm(self.tip(j) - target)
        local = np.zeros(n)
        have_both = ~np.isnan(dists) & ~np.isnan(self._prev_dists)
        local[have_both] = self._prev_dists[have_both] - dists[have_both]
        self._prev_dists = dists

        safety = np.array([
            0.1 if j in arm_actions and arm_actions[j].velocities.any()
            and j not in events.interventions else 0.0
            for j in range(n)
        ])
        collab = np.zeros(n)
        for arm, node in events.completions:
            if node in events.enabled:
                collab[arm] += 1.0
        if n > 1:
            row_lk = np.abs(self.topo.linking).max(axis=1)
        else:
            row_lk = np.zeros(n)
        phi_local = (
            cfg.coeffs.alpha1 * row_lk
            + cfg.coeffs.alpha2 * np.tanh(self._local_braid_lengths() / cfg.coeffs.c1)
        )
        rewards_a = local + cfg.eta * safety + cfg.xi * collab - cfg.kappa * phi_local
        return float(reward_s), rewards_a

    # -- observations ------------------------------------------------------------------

    def arm_obs_vector(self, arm: int) -> np.ndarray:
        cfg = self.config
        base = self.rest[arm][0]
        tip = self.tip(arm)
        target = self.arm_target(arm)
        to_target = np.zeros(3) if target is None else target - tip
        dist = 0.0 if target is None else float(np.linalg.norm(to_target))
        row_lk = (
            float(np.abs(self.topo.linking[arm]).max()) if cfg.n_arms > 1 else 0.0
        )
        clear = min(float(min_obstacle_clearance(self.arms[arm], self.workspace)),
                    2.0 * cfg.arm_length)
        return np.array([
            *(tip - base),
            *to_target,
            dist,
            clear,
            float(self.topo.writhes[arm]),
            row_lk,
            float(np.tanh(len(self.braid) / 10.0)),
            float(self.topo.risk) / 5.0,
            1.0 if self.detector.entangled else 0.0,
            0.0 if target is None else 1.0,
        ])

    def global_obs_vector(self) -> np.ndarray:
        cfg = self.config
        progress = np.array(list(self.graph.progress.values()))
        tips = np.stack([self.tip(j) for j in range(cfg.n_arms)])
        if cfg.n_arms > 1:
            pair = np.linalg.norm(tips[:, None, :] - tips[None, :, :], axis=2)
            mean_sep = float(pair[np.triu_indices(cfg.n_arms, 1)].mean())
        else:
            mean_sep = 0.0
        return np.array([
            float(progress.mean()),
            self.graph.completed_count / len(progress),
            self.topo.max_abs_linking,
            float(np.tanh(len(self.braid) / 10.0)),
            float(self.topo.risk) / 5.0,
            1.0 if self.detector.entangled else 0.0,
            len(self.allocation.assignment) / cfg.n_arms,
            mean_sep / (2.0 * cfg.arm_length),
            self.step_count / cfg.horizon,
        ])

    # -- constraint reporting --------------------------------------------------------------

    def check_constraints(self) -> dict:
        """All eight constraint families with ok flags and margins."""
        cfg = self.config
        reports = {}
        clear = [min_obstacle_clearance(a, self.workspace) for a in self.arms]
        c1 = float(min(clear))
        reports["C1"] = {"ok": c1 >= 0.0, "margin": c1}
        speeds = [float(np.linalg.norm(a.velocities, axis=1).max()) for a in self.arms]
        c2 = cfg.v_max - max(speeds)
        reports["C2"] = {"ok": c2 >= -1e-9, "margin": float(c2)}
        kappas = [float(curvature_profile(a.centerline).max()) for a in self.arms]
        c3 = cfg.kappa_max - max(kappas)
        reports["C3"] = {"ok": c3 >= -1e-6, "margin": float(c3)}
        errs = [
            float(np.abs(
                np.linalg.norm(np.diff(a.centerline.points, axis=0), axis=1)
                - cfg.segment
            ).max())
            for a in self.arms
        ]
        c4 = -max(errs)
        reports["C4"] = {"ok": c4 >= -1e-9, "margin": float(c4)}
        c5 = min(containment_margin(self.workspace, a.centerline.points)
                 for a in self.arms)
        reports["C5"] = {"ok": c5 >= -1e-9, "margin": float(c5)}
        gated = [
            n for n in self.graph.nodes()
            if self.graph.progress[n] > 0.0
            and not all(self.graph.complete(p) for p in self.graph.predecessors(n))
        ]
        reports["C6"] = {"ok": not gated, "margin": float(-len(gated))}
        held = list(self.allocation.assignment.values())
        dup_nodes = len(held) - len(set(held))
        reports["C7"] = {"ok": dup_nodes == 0, "margin": float(-dup_nodes)}
        arms = list(self.allocation.assignment.keys())
        dup_arms = len(arms) - len(set(arms))
        reports["C8"] = {"ok": dup_arms == 0, "margin": float(-dup_arms)}
        return reports


def _rotate_toward(d, ref, angle):
    """Unit vector exactly `angle` away from unit `ref`, in the plane of (ref, d)."""
    perp = d - (d @ ref) * ref
    norm = float(np.linalg.norm(perp))
    if norm < 1e-12:
        # d is antiparallel to ref: any perpendicular plane serves
        helper = np.array([1.0, 0.0, 0.0])
        if abs(float(ref @ helper)) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        perp = np.cross(ref, helper)
        norm = float(np.linalg.norm(perp))
    perp = perp / norm
    return np.cos(angle) * ref + np.sin(angle) * perp


def _box_fix(cand, anchor, seg, lo, hi):
    """Pull a candidate node inside the box without changing the step length.

    Clamps each violating axis to its bound and redistributes the lost
    displacement to the remaining axes, keeping |cand - anchor| = seg.
    Returns None when no same-length in-box step exists from this anchor.
    """
    if (cand >= lo).all() and (cand <= hi).all():
        return cand
    d = cand - anchor
    fixed = np.clip(cand, lo, hi)
    locked = fixed != cand
    free = ~locked
    residual = seg * seg - float(((fixed - anchor)[locked] ** 2).sum())
    if residual < 0 or not free.any():
        return None
    d_free = d[free]
    norm = float(np.linalg.norm(d_free))
    if norm < 1e-12:
        return None
    out = fixed.copy()
    out[free] = anchor[free] + d_free * (np.sqrt(residual) / norm)
    if (out < lo - 1e-12).any() or (out > hi + 1e-12).any():
        return None
    return out


def _rotate_frames(frames, axis_angle, angle):
    axis = axis_angle / angle
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    rot = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
    return np.einsum("ij,njk->nik", rot, frames)


class TopScheduler:
    """Greedy feasible allocator with concurrency control and replan handling."""

    def __init__(self, env: MultiArmEnv):
        self.env = env
        self._budget_penalty_until = -1

    def act(self, replan_arms=()) -> SchedulerAction:
        env = self.env
        cfg = env.config
        action = SchedulerAction()
        if not cfg.hierarchical_control:
            # flat ablation: every arm stays active, greedy fill, no replans
            self._fill_idle_arms(action, range(cfg.n_arms))
            return action
        avoid = {}
        for arm in sorted(set(replan_arms)):
            node = env.allocation.get(arm)
            if node is not None:
                action.releases.append(arm)
                avoid[arm] = node
            action.replanned_arms.append(arm)
        if action.replanned_arms:
            self._budget_penalty_until = env.step_count + cfg.replan_budget_steps
        budget = concurrency_budget(
            len(env.braid), cfg.n_min, cfg.n_arms, cfg.conc_alpha
        )
        if env.step_count < self._budget_penalty_until:
            budget = max(cfg.n_min, budget - 1)
        action.concurrency = budget
        releasing = set(action.releases)
        for arm in range(budget, cfg.n_arms):
            # arms outside the concurrency window go idle; progress is kept
            if env.allocation.get(arm) is not None and arm not in releasing:
                action.releases.append(arm)
        self._fill_idle_arms(action, range(min(budget, cfg.n_arms)), avoid)
        return action

    def _fill_idle_arms(self, action, active, avoid=None):
        env = self.env
        cfg = env.config
        avoid = avoid or {}
        reach = 0.9 * cfg.arm_length  # bending slack below full extension
        releasing = set(action.releases)
        taken = {
            node for arm, node in env.allocation.assignment.items()
            if arm not in releasing
        }
        available = [n for n in env.graph.available() if n not in taken]
        for arm in active:
            if env.allocation.get(arm) is not None and arm not in releasing:
                continue
            base = env.rest[arm][0]
            candidates = [
                n for n in available
                if n != avoid.get(arm)
                and float(np.linalg.norm(env.target_of(n) - base)) <= reach
            ]
            if not candidates:
                continue
            dists = [
                float(np.linalg.norm(env.tip(arm) - env.target_of(n)))
                for n in candidates
            ]
            node = candidates[int(np.argmin(dists))]
            available.remove(node)
            action.assignments.append((arm, node))
