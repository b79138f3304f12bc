"""Dual experience replay: risk-partitioned buffers with mixed priorities.

Experiences are routed by their topological risk into a safe, a risky, or a
neutral ring buffer, so rare high-risk transitions survive long after the
bulk of routine data has been evicted. Sampling mixes TD-error priority with
raw risk under a weight that grows with the fraction of entanglement events
seen, and importance weights correct the induced bias.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .safety import RiskCoeffs

BETA_IS = 0.4  # importance-correction exponent


@dataclass
class Experience:
    observation: object
    action: object
    reward: float
    next_observation: object
    done: bool
    topo_risk: float
    td_error: float = None  # filled with the running max priority on store
    entangled: bool = False
    # training targets annotated per episode before storage
    global_observation: object = None
    next_global_observation: object = None
    advantage: float = None
    ret: float = None
    old_logp: float = None


@dataclass
class SampleBatch:
    experiences: list
    weights: np.ndarray
    omega: float
    partial: bool = False

    def __len__(self):
        return len(self.experiences)


class DualReplay:
    """Three-buffer replay with risk/TD mixed sampling priorities."""

    def __init__(self, capacity_safe: int = 50_000, capacity_risky: int = 20_000,
                 capacity_neutral: int = 50_000, omega_min: float = 0.2,
                 omega_max: float = 0.8, seed: int = 0):
        if not 0 <= omega_min <= omega_max <= 1:
            raise ValueError("need 0 <= omega_min <= omega_max <= 1")
        self.buffers = {
            "safe": deque(maxlen=capacity_safe),
            "risky": deque(maxlen=capacity_risky),
            "neutral": deque(maxlen=capacity_neutral),
        }
        self.omega_min = omega_min
        self.omega_max = omega_max
        self.n_entangle = 0
        self.n_total = 0
        self.nonfinite_count = 0
        self.max_priority = 1.0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return sum(len(b) for b in self.buffers.values())

    @property
    def counts(self):
        return {name: len(b) for name, b in self.buffers.items()}

    @property
    def omega(self) -> float:
        if self.n_total == 0:
            return self.omega_min
        frac = self.n_entangle / self.n_total
        return self.omega_min + (self.omega_max - self.omega_min) * frac

    def classify(self, risk: float, coeffs: RiskCoeffs) -> str:
        if not np.isfinite(risk):
            return "risky"
        if risk < coeffs.tau_low:
            return "safe"
        if risk >= coeffs.tau_high:
            return "risky"
        return "neutral"

    def store(self, e: Experience, coeffs: RiskCoeffs) -> str:
        """Route one experience to its buffer; returns the buffer id."""
        if not np.isfinite(e.topo_risk):
            self.nonfinite_count += 1  # conservative routing, kept visible
        name = self.classify(e.topo_risk, coeffs)
        if e.td_error is None:
            e.td_error = self.max_priority
        else:
            self.note_td(e.td_error)
        self.buffers[name].append(e)
        self.n_total += 1
        self.n_entangle += int(e.entangled)
        return name

    def note_td(self, td_error: float):
        """Keep the running max priority fresh after a TD refresh."""
        if np.isfinite(td_error):
            self.max_priority = max(self.max_priority, abs(float(td_error)))

    def _all(self):
        return [e for b in self.buffers.values() for e in b]

    def priorities(self, experiences=None, omega: float = None) -> np.ndarray:
        """Normalized sampling distribution P(i) over the candidate set."""
        pool = self._all() if experiences is None else list(experiences)
        w = self.omega if omega is None else omega
        raw = np.array(
            [(1 - w) * abs(e.td_error) + w * max(0.0, e.topo_risk) for e in pool]
        )
        raw = np.where(np.isfinite(raw), raw, self.max_priority)
        total = raw.sum()
        if total <= 0:
            return np.full(len(pool), 1.0 / len(pool)) if len(pool) else raw
        return raw / total

    def sample(self, batch: int, uniform: bool = False) -> SampleBatch:
        """Draw without replacement under P(i); short pools give partial batches."""
        pool = self._all()
        if not pool:
            return SampleBatch([], np.zeros(0), self.omega, partial=batch > 0)
        m = len(pool)
        take = min(batch, m)
        if uniform:
            idx = self.rng.choice(m, size=take, replace=False)
            return SampleBatch(
                [pool[i] for i in idx], np.ones(take), self.omega, partial=take < batch
            )
        p = self.priorities(pool)
        positive = int(np.count_nonzero(p))
        take = min(take, positive)
        idx = self.rng.choice(m, size=take, replace=False, p=p)
        weights = (m * p[idx]) ** -BETA_IS
        weights /= weights.max()
        return SampleBatch(
            [pool[i] for i in idx], weights, self.omega, partial=take < batch
        )
