"""Clipped policy-gradient learner with analytic numpy gradients.

Small feed-forward Gaussian policy and value function, trained with a
clipped-ratio surrogate, generalized advantage estimation mixed with one-step
TD, a risk-weighted auxiliary penalty, and Adam. Gradients are implemented
by hand and kept finite-difference checkable; there is no autograd anywhere.

Training is centralized-critic, decentralized-policy: the value net reads a
global observation while the policy acts on each arm's local one. All arms
share the policy parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .safety import adaptive_discount

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Hyperparameters:
    lr: float = 1e-4
    clip: float = 0.10
    gae_lambda: float = 0.95
    alpha_mix: float = 0.70  # GAE share; the rest is one-step TD
    lambda_topo: float = 0.02
    batch_size: int = 128
    value_coeff: float = 0.5
    hidden: tuple = (64, 64)
    adaptive_gamma: bool = True
    gamma: float = 0.99  # used when adaptive_gamma is off

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 <= self.alpha_mix <= 1:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")


class MLP:
    """Plain tanh network storing parameters as [W1, b1, W2, b2, ...]."""

    def __init__(self, in_dim: int, hidden, out_dim: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        dims = [in_dim, *hidden, out_dim]
        self.params = []
        for a, b in zip(dims[:-1], dims[1:]):
            self.params.append(rng.normal(0.0, np.sqrt(1.0 / a), size=(a, b)))
            self.params.append(np.zeros(b))

    def forward(self, x):
        """Returns (output, cache); hidden layers tanh, output linear."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [x]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = acts[-1] @ w + b
            acts.append(np.tanh(z) if layer < n_layers - 1 else z)
        return acts[-1], acts

    def backward(self, acts, grad_out):
        """Parameter gradients for per-sample output gradients grad_out."""
        grads = [None] * len(self.params)
        g = np.atleast_2d(grad_out)
        n_layers = len(self.params) // 2
        for layer in reversed(range(n_layers)):
            w = self.params[2 * layer]
            grads[2 * layer] = acts[layer].T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                g = (g @ w.T) * (1.0 - acts[layer] ** 2)
        return grads

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        i = 0
        for p in self.params:
            p[...] = np.asarray(flat[i : i + p.size]).reshape(p.shape)
            i += p.size

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)


class GaussianPolicy:
    """Diagonal Gaussian over actions; trainable state-independent log std."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), seed: int = 0):
        self.trunk = MLP(obs_dim, hidden, act_dim, seed=seed)
        self.log_std = np.full(act_dim, -0.5)
        self.act_dim = act_dim

    def mean(self, obs):
        return self.trunk.forward(obs)[0]

    def sample(self, obs, rng) -> np.ndarray:
        mu = self.mean(obs)
        return mu + np.exp(self.log_std) * rng.standard_normal(mu.shape)

    def log_prob(self, obs, actions) -> np.ndarray:
        mu, _ = self.trunk.forward(obs)
        actions = np.atleast_2d(actions)
        z = (actions - mu) / np.exp(self.log_std)
        return -0.5 * (z**2).sum(axis=1) - self.log_std.sum() \
            - 0.5 * self.act_dim * np.log(2 * np.pi)

    def log_prob_grads(self, obs, actions, coeffs) -> np.ndarray:
        """Flat gradient of sum_i coeffs_i * log pi(a_i | s_i)."""
        mu, acts = self.trunk.forward(obs)
        actions = np.atleast_2d(actions)
        coeffs = np.asarray(coeffs, dtype=float)[:, None]
        var = np.exp(2 * self.log_std)
        dmu = coeffs * (actions - mu) / var
        trunk_grads = self.trunk.backward(acts, dmu)
        dlog_std = (coeffs * (((actions - mu) ** 2) / var - 1.0)).sum(axis=0)
        return np.concatenate([np.concatenate([g.ravel() for g in trunk_grads]), dlog_std])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.trunk.get_flat(), self.log_std])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        self.trunk.set_flat(flat[: self.trunk.n_params])
        self.log_std[...] = flat[self.trunk.n_params :]

    @property
    def n_params(self) -> int:
        return self.trunk.n_params + self.act_dim


class ValueNet:
    def __init__(self, obs_dim: int, hidden=(64, 64), seed: int = 0):
        self.mlp = MLP(obs_dim, hidden, 1, seed=seed)

    def value(self, obs) -> np.ndarray:
        return self.mlp.forward(obs)[0][:, 0]

    def value_grads(self, obs, coeffs) -> np.ndarray:
        """Flat gradient of sum_i coeffs_i * V(s_i)."""
        _, acts = self.mlp.forward(obs)
        g = np.asarray(coeffs, dtype=float)[:, None]
        grads = self.mlp.backward(acts, g)
        return np.concatenate([x.ravel() for x in grads])

    def get_flat(self) -> np.ndarray:
        return self.mlp.get_flat()

    def set_flat(self, flat):
        self.mlp.set_flat(flat)


class Adam:
    def __init__(self, n: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def discount_for(risk: float, hyper: Hyperparameters) -> float:
    return adaptive_discount(risk) if hyper.adaptive_gamma else hyper.gamma


def compute_advantages(episode, value_net: ValueNet, policy: GaussianPolicy,
                       hyper: Hyperparameters):
    """Annotate one agent's episode, in step order, with training targets.

    Sets advantage (alpha_mix * GAE + (1 - alpha_mix) * one-step TD), ret
    (GAE return, the value-regression target), old_logp (behavior-policy log
    probability), and td_error (the fresh one-step delta) on each experience.
    """
    if not episode:
        return
    obs_g = np.stack([e.global_observation for e in episode])
    next_g = np.stack([e.next_global_observation for e in episode])
    values = value_net.value(obs_g)
    next_values = value_net.value(next_g)
    rewards = np.array([e.reward for e in episode], dtype=float)
    dones = np.array([e.done for e in episode], dtype=float)
    gammas = np.array([discount_for(e.topo_risk, hyper) for e in episode])
    deltas = rewards + gammas * next_values * (1 - dones) - values
    gae = np.zeros(len(episode))
    acc = 0.0
    for t in reversed(range(len(episode))):
        acc = deltas[t] + gammas[t] * hyper.gae_lambda * (1 - dones[t]) * acc
        gae[t] = acc
    mixed = hyper.alpha_mix * gae + (1 - hyper.alpha_mix) * deltas
    obs_l = np.stack([e.observation for e in episode])
    actions = np.stack([e.action for e in episode])
    old_logp = policy.log_prob(obs_l, actions)
    for i, e in enumerate(episode):
        e.advantage = float(mixed[i])
        e.ret = float(gae[i] + values[i])
        e.old_logp = float(old_logp[i])
        e.td_error = float(deltas[i])


class Learner:
    """Shared policy + centralized critic with explicit-gradient updates."""

    def __init__(self, obs_dim: int, act_dim: int, global_dim: int = None,
                 hyper: Hyperparameters = None, seed: int = 0):
        self.hyper = hyper or Hyperparameters()
        self.policy = GaussianPolicy(obs_dim, act_dim, self.hyper.hidden, seed=seed)
        self.value = ValueNet(global_dim or obs_dim, self.hyper.hidden, seed=seed + 1)
        self.opt_policy = Adam(self.policy.n_params, self.hyper.lr)
        self.opt_value = Adam(self.value.mlp.n_params, self.hyper.lr)
        self.skipped_updates = 0

    def losses_and_grads(self, experiences, weights):
        """Each loss term and its flat analytic gradient, no parameter change."""
        h = self.hyper
        w = np.asarray(weights, dtype=float)
        obs_l = np.stack([e.observation for e in experiences])
        obs_g = np.stack([e.global_observation for e in experiences])
        actions = np.stack([e.action for e in experiences])
        adv = np.array([e.advantage for e in experiences], dtype=float)
        rets = np.array([e.ret for e in experiences], dtype=float)
        old_logp = np.array([e.old_logp for e in experiences], dtype=float)
        risk = np.array([e.topo_risk for e in experiences], dtype=float)
        n = len(experiences)

        logp = self.policy.log_prob(obs_l, actions)
        ratio = np.exp(logp - old_logp)
        clipped = np.clip(ratio, 1 - h.clip, 1 + h.clip)
        surr1, surr2 = ratio * adv, clipped * adv
        policy_loss = -np.mean(w * np.minimum(surr1, surr2))
        # ratio gradient is live on the unclipped branch (ties included)
        live = (surr1 <= surr2) | ((ratio > 1 - h.clip) & (ratio < 1 + h.clip))
        dlogp_policy = -(w / n) * np.where(live, adv, 0.0) * ratio

        topo_loss = h.lambda_topo * np.mean(w * ratio * risk)
        dlogp_topo = h.lambda_topo * (w / n) * risk * ratio

        values = self.value.value(obs_g)
        err = values - rets
        value_loss = 0.5 * h.value_coeff * np.mean(w * err**2)
        dvalue = h.value_coeff * (w / n) * err

        return {
            "policy_loss": float(policy_loss),
            "value_loss": float(value_loss),
            "topo_loss": float(topo_loss),
            "grad_policy": self.policy.log_prob_grads(obs_l, actions, dlogp_policy),
            "grad_topo": self.policy.log_prob_grads(obs_l, actions, dlogp_topo),
            "grad_value": self.value.value_grads(obs_g, dvalue),
            "ratio_mean": float(ratio.mean()),
            "clip_fraction": float(np.mean(~live)),
        }

    def update_policies(self, batch) -> dict:
        """One optimization step from a sampled batch; refreshes TD priorities."""
        if not batch.experiences:
            return {"skipped": True, "reason": "empty batch"}
        out = self.losses_and_grads(batch.experiences, batch.weights)
        total = out["policy_loss"] + out["value_loss"] + out["topo_loss"]
        grad_p = out["grad_policy"] + out["grad_topo"]
        if not (np.isfinite(total) and np.isfinite(grad_p).all()
                and np.isfinite(out["grad_value"]).all()):
            self.skipped_updates += 1
            return {**out, "total_loss": float(total), "skipped": True,
                    "reason": "non-finite loss or gradient"}
        self.policy.set_flat(self.opt_policy.step(self.policy.get_flat(), grad_p))
        self.value.set_flat(self.opt_value.step(self.value.get_flat(), out["grad_value"]))
        max_td = self._refresh_td(batch.experiences)
        return {**out, "total_loss": float(total), "skipped": False, "max_td": max_td}

    def _refresh_td(self, experiences) -> float:
        obs_g = np.stack([e.global_observation for e in experiences])
        next_g = np.stack([e.next_global_observation for e in experiences])
        values = self.value.value(obs_g)
        next_values = self.value.value(next_g)
        worst = 0.0
        for i, e in enumerate(experiences):
            gamma = discount_for(e.topo_risk, self.hyper)
            delta = e.reward + gamma * next_values[i] * (1 - e.done) - values[i]
            e.td_error = float(delta)
            worst = max(worst, abs(e.td_error))
        return worst

    def save(self, path, extra: dict = None):
        header = json.dumps({"version": CHECKPOINT_VERSION, **(extra or {})})
        np.savez(
            path,
            header=np.frombuffer(header.encode(), dtype=np.uint8),
            policy=self.policy.get_flat(),
            value=self.value.get_flat(),
        )

    def load(self, path) -> dict:
        data = np.load(path)
        header = json.loads(bytes(data["header"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {header.get('version')}")
        self.policy.set_flat(data["policy"])
        self.value.set_flat(data["value"])
        return header
