"""Scenario runner: seeded training jobs, ablations, metrics, artifact files.

Each seed is an independent job (dispatched through a process pool when more
than one worker is available) that trains a shared policy with a centralized
critic on one scenario and returns per-episode records plus a step-by-step
trace of its final episode. Aggregation is a sequential pass over the
returned records, so a run is a pure function of (config, seed list).

Artifact files, written when the config carries an output directory; field
names are stable:

  metrics.json   config echo plus the aggregated report
  curve.csv      learning curve averaged across seeds, one row per episode:
                 episode, mean_reward, entanglement_rate, intervention_rate,
                 omega
  episodes.csv   one row per (seed, episode), the source of record for every
                 metric: metrics_from_records(records_from_csv(path)) rebuilds
                 metrics.json offline
  trace.jsonl    final episode of each seed, one JSON record per step with
                 positions, topology, rewards, screening decisions, events,
                 and constraint flags
  checkpoint_seed<k>.npz
                 policy and value parameters plus replay counters

Metric definitions. Entanglement rate is the percentage of episodes with at
least one confirmed entanglement onset. Task success rate is the mean
percentage of tasks fully completed within the horizon. Intervention rate is
the percentage of screened actions the safety layer modified; with the
safety layer ablated nothing is screened and the rate is zero by
construction. Idle rate counts (arm, step) pairs with no assignment while
unfinished tasks remain. Convergence is the first episode whose 100-episode
moving-average reward reaches 95% of the final 500-episode mean. Mean reward
and its standard deviation are taken across seeds over that same final
window. sample_auc_per_1e3 is area under the reward-versus-samples curve per
thousand stored experiences; dividing by a baseline run's value gives a
relative sample-efficiency figure (a redefinition, not a standard measure).

Replay experiences store the raw policy sample, not the screened action: the
safety layer is part of the environment from the learner's point of view.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .env import (
    ACTION_DIM,
    ARM_OBS_DIM,
    GLOBAL_OBS_DIM,
    EpisodeAbort,
    MultiArmEnv,
    TopScheduler,
    action_from_command,
    make_scenario,
)
from .learner import Hyperparameters, Learner, compute_advantages
from .replay import DualReplay, Experience
from .safety import RiskCoeffs, screen_action

SCENARIO_CAPS = {"low": 2000, "medium": 3000, "high": 5000}
ABLATABLE = ("dual_replay", "safety_layer", "hierarchical_control")
# keys that belong to the config itself, not to the scenario override dict
_RESERVED_ENV_KEYS = {"name", "seed", "coeffs", "hierarchical_control"}


@dataclass(frozen=True)
class RunConfig:
    """One experiment: scenario, seeds, ablation switches, overrides.

    Validation happens on construction, before any compute: a bad scenario
    name, coefficient, or hyperparameter raises immediately.
    """

    scenario: str
    seeds: tuple = (0,)
    episodes: int = None  # None takes the scenario default cap
    dual_replay: bool = True
    safety_layer: bool = True
    hierarchical_control: bool = True
    env_overrides: dict = field(default_factory=dict)
    coeff_overrides: dict = field(default_factory=dict)
    hyper_overrides: dict = field(default_factory=dict)
    updates_per_episode: int = 2
    out_dir: str = None

    def __post_init__(self):
        probe = self.scenario_config(seed=0)  # raises on any bad value
        object.__setattr__(self, "scenario", probe.name)
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ValueError("need at least one seed")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be unique")
        object.__setattr__(self, "seeds", seeds)
        if self.episodes is None:
            object.__setattr__(self, "episodes", SCENARIO_CAPS[probe.name])
        if self.episodes < 1:
            raise ValueError("episodes must be at least one")
        if self.updates_per_episode < 0:
            raise ValueError("updates_per_episode must be non-negative")
        self.hyperparameters()  # raises on bad hyper overrides

    def scenario_config(self, seed: int):
        bad = _RESERVED_ENV_KEYS & set(self.env_overrides)
        if bad:
            raise ValueError(f"reserved env override keys: {sorted(bad)}")
        overrides = dict(self.env_overrides)
        if self.coeff_overrides:
            overrides["coeffs"] = RiskCoeffs(**self.coeff_overrides)
        return make_scenario(self.scenario, seed=seed,
                             hierarchical_control=self.hierarchical_control,
                             **overrides)

    def hyperparameters(self) -> Hyperparameters:
        over = dict(self.hyper_overrides)
        if not self.dual_replay:
            over["lambda_topo"] = 0.0  # baseline toggle drops the topology loss
        return Hyperparameters(**over)


@dataclass(frozen=True)
class EpisodeRecord:
    """Everything one episode contributes to the metrics."""

    seed: int
    episode: int
    reward: float  # episode return, scheduler reward summed over steps
    steps: int
    entangle_events: int  # confirmed entanglement onsets
    screened: int
    interventions: int  # screened actions that came back modified
    replans: int
    tasks_done: int
    tasks_total: int
    idle_pairs: int  # (arm, step) unassigned while work remained
    idle_possible: int
    omega: float  # replay mixing weight after the episode
    samples: int  # cumulative experiences stored by this seed


@dataclass(frozen=True)
class MetricsReport:
    """Aggregated run outcome; percentages are in [0, 100]."""

    entanglement_rate_pct: float
    task_success_rate_pct: float
    intervention_rate_pct: float
    arm_idle_rate_pct: float
    convergence_episode: float
    mean_reward: float
    reward_std: float
    sample_auc_per_1e3: float
    episodes: int
    seeds: tuple

    def as_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


# -- per-seed training job ---------------------------------------------------


def _episode_seed(seed: int, episode: int) -> int:
    # distinct for every (seed, episode) as long as caps stay below 1e6
    return seed * 1_000_003 + episode


def run_seed(config: RunConfig, seed: int):
    """Train one seed; returns (episode records, final-episode trace)."""
    hyper = config.hyperparameters()
    learner = Learner(ARM_OBS_DIM, ACTION_DIM, global_dim=GLOBAL_OBS_DIM,
                      hyper=hyper, seed=seed)
    replay = DualReplay(seed=seed)
    rng = np.random.default_rng(seed)
    env = MultiArmEnv(config.scenario_config(seed=_episode_seed(seed, 0)))
    records, trace, stored = [], [], 0
    for ep in range(config.episodes):
        env.reset(seed=_episode_seed(seed, ep))
        sink = trace if ep == config.episodes - 1 else None
        rec, stored = _run_episode(env, learner, replay, hyper, rng, config,
                                   seed, ep, stored, sink)
        records.append(rec)
    if config.out_dir is not None:
        learner.save(
            os.path.join(config.out_dir, f"checkpoint_seed{seed}.npz"),
            extra={
                "seed": seed,
                "episodes": config.episodes,
                "replay": {"n_total": replay.n_total,
                           "n_entangle": replay.n_entangle,
                           "nonfinite": replay.nonfinite_count},
            },
        )
    return records, trace


def _run_episode(env, learner, replay, hyper, rng, config, seed, ep, stored,
                 sink):
    cfg = env.config
    n = cfg.n_arms
    sched = TopScheduler(env)
    episodes = [[] for _ in range(n)]
    ep_reward = 0.0
    screened = interventions = replans = onsets = 0
    idle_pairs = idle_possible = steps = 0
    prev_entangled = False
    replan_arms = []
    while True:
        sched_action = sched.act(replan_arms)
        replan_arms = []
        global_obs = env.global_obs_vector()
        acting = [j for j in range(n) if env.allocation.get(j) is not None]
        arm_actions, screen_log, pending = {}, {}, {}
        for j in acting:
            obs = env.arm_obs_vector(j)
            cmd = learner.policy.sample(obs, rng)[0]  # single-row batch
            act = action_from_command(cmd, cfg.n_nodes, cfg.v_max)
            if config.safety_layer:
                out = screen_action(j, act, cfg.coeffs,
                                    risk_fn=env.preview_risk,
                                    conservative_fn=env.conservative_action)
                screened += 1
                screen_log[j] = out
                if out.decision != "pass":
                    interventions += 1
                if out.replan_requested:
                    replan_arms.append(j)
                act = out.action
            arm_actions[j] = act
            pending[j] = (obs, cmd)
        flagged = {j: o.decision for j, o in screen_log.items()
                   if o.decision != "pass"}
        try:
            res = env.step(sched_action, arm_actions, interventions=flagged)
        except EpisodeAbort:
            break  # non-finite state; keep what the episode produced so far
        steps += 1
        next_global = env.global_obs_vector()
        team = res.reward_scheduler / n
        for j in acting:
            obs, cmd = pending[j]
            episodes[j].append(Experience(
                observation=obs,
                action=cmd,
                reward=float(res.rewards_arms[j]) + team,
                next_observation=env.arm_obs_vector(j),
                done=res.done,
                topo_risk=float(res.topo.risk),
                entangled=env.detector.entangled,
                global_observation=global_obs,
                next_global_observation=next_global,
            ))
        ep_reward += res.reward_scheduler
        replans += len(res.events.replans)
        if env.detector.entangled and not prev_entangled:
            onsets += 1
        prev_entangled = env.detector.entangled
        if not env.graph.all_done:
            idle_pairs += len(env.idle_arms())
            idle_possible += n
        if sink is not None:
            sink.append(_trace_record(env, res, screen_log, seed, ep))
        if res.done:
            break
    for arm_episode in episodes:
        if not arm_episode:
            continue
        compute_advantages(arm_episode, learner.value, learner.policy, hyper)
        for e in arm_episode:
            replay.store(e, cfg.coeffs)
            stored += 1
    if len(replay) >= hyper.batch_size:
        for _ in range(config.updates_per_episode):
            batch = replay.sample(hyper.batch_size,
                                  uniform=not config.dual_replay)
            learner.update_policies(batch)
    graph = env.graph
    record = EpisodeRecord(
        seed=seed,
        episode=ep,
        reward=float(ep_reward),
        steps=steps,
        entangle_events=onsets,
        screened=screened,
        interventions=interventions,
        replans=replans,
        tasks_done=sum(bool(graph.task_done(t)) for t in graph.tasks),
        tasks_total=len(graph.tasks),
        idle_pairs=idle_pairs,
        idle_possible=idle_possible,
        omega=float(replay.omega),
        samples=stored,
    )
    return record, stored


def _trace_record(env, res, screen_log, seed, ep) -> dict:
    constraints = env.check_constraints()
    return {
        "seed": seed,
        "episode": ep,
        "step": env.step_count,
        "positions": [a.centerline.points.tolist() for a in env.arms],
        "topology": {
            "linking": res.topo.linking.tolist(),
            "writhes": res.topo.writhes.tolist(),
            "braid_length": int(res.topo.braid_length),
            "risk": float(res.topo.risk),
            "entangled": bool(env.detector.entangled),
        },
        "rewards": {
            "scheduler": float(res.reward_scheduler),
            "arms": res.rewards_arms.tolist(),
        },
        "screening": {
            str(j): {"decision": o.decision, "risk": float(o.risk),
                     "replan": bool(o.replan_requested)}
            for j, o in screen_log.items()
        },
        "events": {
            "completions": [[arm, list(node)]
                            for arm, node in res.events.completions],
            "replans": list(res.events.replans),
            "collisions": int(res.events.collisions),
            "interventions": {str(a): d
                              for a, d in res.events.interventions.items()},
        },
        "constraints": {name: bool(r["ok"]) for name, r in constraints.items()},
    }


# -- metrics -------------------------------------------------------------------


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean; shorter prefixes average what is available."""
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _seed_summary(records):
    records = sorted(records, key=lambda r: r.episode)
    rewards = np.array([r.reward for r in records], dtype=float)
    n = len(records)
    final = float(rewards[-min(500, n):].mean())
    ma = _moving_average(rewards, 100)
    hit = np.nonzero(ma >= 0.95 * final)[0]
    convergence = int(hit[0]) + 1 if hit.size else n
    samples = np.array([r.samples for r in records], dtype=float)
    if n > 1 and samples[-1] > 0:
        auc = float(np.trapezoid(rewards, samples)) / (samples[-1] / 1e3)
    else:
        auc = float(rewards[-1]) if n else 0.0
    return {
        "entangled_episodes": sum(r.entangle_events > 0 for r in records),
        "episodes": n,
        "success": float(np.mean([r.tasks_done / r.tasks_total
                                  for r in records])),
        "screened": sum(r.screened for r in records),
        "interventions": sum(r.interventions for r in records),
        "idle_pairs": sum(r.idle_pairs for r in records),
        "idle_possible": sum(r.idle_possible for r in records),
        "final_reward": final,
        "convergence": convergence,
        "auc": auc,
    }


def metrics_from_records(records) -> MetricsReport:
    """Aggregate per-episode records into the run report.

    A pure function of the records, so metrics.json can be rebuilt offline
    from episodes.csv alone.
    """
    if not records:
        raise ValueError("no episode records to aggregate")
    by_seed = {}
    for r in records:
        by_seed.setdefault(r.seed, []).append(r)
    seeds = sorted(by_seed)
    sums = [_seed_summary(by_seed[s]) for s in seeds]
    screened = sum(s["screened"] for s in sums)
    intervened = sum(s["interventions"] for s in sums)
    idle_possible = sum(s["idle_possible"] for s in sums)
    idle_pairs = sum(s["idle_pairs"] for s in sums)
    finals = np.array([s["final_reward"] for s in sums])
    return MetricsReport(
        entanglement_rate_pct=100.0 * float(np.mean(
            [s["entangled_episodes"] / s["episodes"] for s in sums])),
        task_success_rate_pct=100.0 * float(np.mean(
            [s["success"] for s in sums])),
        intervention_rate_pct=(100.0 * intervened / screened
                               if screened else 0.0),
        arm_idle_rate_pct=(100.0 * idle_pairs / idle_possible
                           if idle_possible else 0.0),
        convergence_episode=float(np.mean([s["convergence"] for s in sums])),
        mean_reward=float(finals.mean()),
        reward_std=float(finals.std()),
        sample_auc_per_1e3=float(np.mean([s["auc"] for s in sums])),
        episodes=max(s["episodes"] for s in sums),
        seeds=tuple(seeds),
    )


def average_reports(reports) -> MetricsReport:
    """Plain field-wise mean, the protocol for pooling runs that differ only
    in their process schedule; seed lists concatenate."""
    if not reports:
        raise ValueError("no reports to average")
    scalars = [f.name for f in fields(MetricsReport)
               if f.name not in ("episodes", "seeds")]
    merged = {name: float(np.mean([getattr(r, name) for r in reports]))
              for name in scalars}
    merged["episodes"] = int(round(np.mean([r.episodes for r in reports])))
    merged["seeds"] = tuple(s for r in reports for s in r.seeds)
    return MetricsReport(**merged)


# -- record and curve serialization ----------------------------------------------


def records_to_csv(records, path) -> None:
    names = [f.name for f in fields(EpisodeRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow([getattr(r, name) for name in names])


def records_from_csv(path):
    specs = [(f.name, f.type) for f in fields(EpisodeRecord)]
    casts = {"int": int, "float": float}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(EpisodeRecord(**{
                name: casts[tp](row[name]) for name, tp in specs
            }))
    return out


def curve_rows(records):
    """Across-seed learning curve: one row per episode index."""
    by_ep = {}
    for r in records:
        by_ep.setdefault(r.episode, []).append(r)
    rows = []
    for ep in sorted(by_ep):
        group = by_ep[ep]
        screened = sum(r.screened for r in group)
        rows.append({
            "episode": ep,
            "mean_reward": float(np.mean([r.reward for r in group])),
            "entanglement_rate": 100.0 * float(np.mean(
                [r.entangle_events > 0 for r in group])),
            "intervention_rate": (
                100.0 * sum(r.interventions for r in group) / screened
                if screened else 0.0),
            "omega": float(np.mean([r.omega for r in group])),
        })
    return rows


def _write_curve(records, path) -> None:
    rows = curve_rows(records)
    names = ["episode", "mean_reward", "entanglement_rate",
             "intervention_rate", "omega"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in rows:
            w.writerow([row[name] for name in names])


# -- run orchestration -----------------------------------------------------------


def _seed_job(payload):
    config, seed = payload
    return run_seed(config, seed)


def run(config: RunConfig) -> MetricsReport:
    """Execute every seed, aggregate, and write artifacts if requested."""
    if config.out_dir is not None:
        os.makedirs(config.out_dir, exist_ok=True)
    jobs = [(config, s) for s in config.seeds]
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_seed_job, jobs))
    else:
        outs = [_seed_job(j) for j in jobs]
    records = [r for recs, _ in outs for r in recs]
    report = metrics_from_records(records)
    if config.out_dir is not None:
        out = config.out_dir
        records_to_csv(records, os.path.join(out, "episodes.csv"))
        _write_curve(records, os.path.join(out, "curve.csv"))
        with open(os.path.join(out, "trace.jsonl"), "w") as fh:
            for _, trace in outs:
                for record in trace:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
        payload = {"config": asdict(config), "metrics": report.as_dict()}
        with open(os.path.join(out, "metrics.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report
