"""Proximal policy optimization for the resource-management agent.

Everything is built on the float64 MLP core: a softmax policy net and a
scalar value net (24 -> 64 -> 64 -> 21/1 by default, tanh hidden layers),
generalized advantage estimation, the clipped surrogate objective with
entropy bonus and value loss, and a rollout/update loop with early stopping.
Gradients are hand-derived and checked against finite differences in the
test suite; given a seed, training is bit-reproducible.

Early stopping: once at least window + patience episodes have run, training
stops when the trailing-`window` mean episode reward has improved by less
than `rel_improvement` (relative) over the last `patience` episodes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_random_state
from .nn import MLP, Adam, log_softmax

__all__ = [
    "PPOConfig",
    "Trajectory",
    "TrainResult",
    "gae",
    "normalize_advantages",
    "clipped_loss_and_grads",
    "sample_action",
    "PPOAgent",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class PPOConfig:
    state_dim: int = 24
    n_actions: int = 21
    hidden: tuple[int, int] = (64, 64)
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    update_epochs: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_episodes: int = 10_000
    rollout_episodes: int = 8
    early_stop_window: int = 100
    early_stop_patience: int = 500
    early_stop_rel_improvement: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lambda must be in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip epsilon must be positive")


@dataclass
class Trajectory:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    bootstrap_value: float = 0.0   # V(s_T) when the episode was truncated

    def __len__(self) -> int:
        return len(self.rewards)


def gae(trajectory: Trajectory, gamma: float, lam: float
        ) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns by the recursive estimator.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    returns = A + V

    The value of the state after the last step is ``bootstrap_value`` (zero
    for terminal episodes). Advantages come back raw; normalization happens
    per update batch.
    """
    t_len = len(trajectory)
    fields = (trajectory.states, trajectory.actions, trajectory.log_probs,
              trajectory.values, trajectory.dones)
    if any(len(f) != t_len for f in fields):
        raise ValueError("trajectory fields have mismatched lengths")
    rewards = np.asarray(trajectory.rewards, dtype=np.float64)
    values = np.asarray(trajectory.values, dtype=np.float64)
    dones = np.asarray(trajectory.dones, dtype=np.float64)
    next_values = np.append(values[1:], trajectory.bootstrap_value)

    adv = np.zeros(t_len)
    acc = 0.0
    for t in range(t_len - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] * (1.0 - dones[t]) - values[t]
        acc = delta + gamma * lam * (1.0 - dones[t]) * acc
        adv[t] = acc
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / max(adv.std(), 1e-8)


def clipped_loss_and_grads(policy: MLP, value_net: MLP, batch: dict,
                           config: PPOConfig
                           ) -> tuple[float, np.ndarray, np.ndarray, dict]:
    """PPO loss and flat parameter gradients for one minibatch.

    L = -E[min(rho * A, clip(rho, 1-eps, 1+eps) * A)]
        + value_coef * E[(V - R)^2] - entropy_coef * E[H(pi)]

    with rho = exp(log pi_new(a|s) - log pi_old(a|s)). Ties in the min go to
    the unclipped branch.
    """
    states = np.asarray(batch["states"], dtype=np.float64)
    if states.size == 0:
        raise ValueError("empty batch")
    actions = np.asarray(batch["actions"], dtype=np.int64)
    logp_old = np.asarray(batch["log_probs"], dtype=np.float64)
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    n = states.shape[0]
    eps = config.clip_eps
    rows = np.arange(n)

    logits, pcache = policy.forward(states)
    logp = log_softmax(logits, axis=1)
    p = np.exp(logp)
    logp_a = logp[rows, actions]
    rho = np.exp(logp_a - logp_old)

    s1 = rho * adv
    s2 = np.clip(rho, 1.0 - eps, 1.0 + eps) * adv
    take_unclipped = s1 <= s2
    surrogate = -float(np.minimum(s1, s2).mean())

    entropy = -(p * logp).sum(axis=1)
    mean_entropy = float(entropy.mean())

    v_out, vcache = value_net.forward(states)
    v = v_out[:, 0]
    value_loss = float(((v - returns) ** 2).mean())

    loss = surrogate + config.value_coef * value_loss - config.entropy_coef * mean_entropy
    if not math.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss (surrogate={surrogate}, value={value_loss}, "
            f"entropy={mean_entropy})")

    # d surrogate / d rho: active branch only; the clipped branch is flat
    # outside the clip band
    inside = (rho > 1.0 - eps) & (rho < 1.0 + eps)
    drho = np.where(take_unclipped, -adv, np.where(inside, -adv, 0.0)) / n
    dlogp_a = drho * rho
    # d logp(a) / d logits = onehot(a) - softmax
    dlogits = p * (-dlogp_a)[:, None]
    dlogits[rows, actions] += dlogp_a
    # entropy term: dH/dlogits = -p * (logp + H)
    dlogits += config.entropy_coef / n * p * (logp + entropy[:, None])

    gpw, gpb, _ = policy.backward(pcache, dlogits)

    dv = (2.0 * config.value_coef / n) * (v - returns)
    gvw, gvb, _ = value_net.backward(vcache, dv[:, None])

    stats = {
        "surrogate": surrogate,
        "value_loss": value_loss,
        "entropy": mean_entropy,
        "clip_fraction": float((~take_unclipped).mean()),
    }
    return loss, MLP.flatten_grads(gpw, gpb), MLP.flatten_grads(gvw, gvb), stats


def sample_action(policy: MLP, state: np.ndarray, rng: np.random.Generator
                  ) -> tuple[int, float]:
    """Sample an action from the softmax policy; returns (action, log-prob)."""
    logits, _ = policy.forward(state.reshape(1, -1))
    logp = log_softmax(logits, axis=1)[0]
    probs = np.exp(logp)
    a = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum()))
    a = min(a, len(probs) - 1)
    return a, float(logp[a])


def greedy_action(policy: MLP, state: np.ndarray) -> int:
    logits, _ = policy.forward(state.reshape(1, -1))
    return int(np.argmax(logits[0]))


@dataclass
class TrainResult:
    policy: MLP
    value_net: MLP
    config: PPOConfig
    curve: list[tuple[int, float, float]]   # (episode, episode_reward, trailing_mean)
    episodes_run: int
    stopped_early: bool

    def write_curve_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "episode_reward", "mean_reward"])
            for row in self.curve:
                w.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}"])


class PPOAgent:
    """Inference wrapper around a trained policy/value pair."""

    def __init__(self, policy: MLP, value_net: MLP, config: PPOConfig):
        self.policy = policy
        self.value_net = value_net
        self.config = config

    def act(self, state: np.ndarray) -> int:
        """Deterministic (mode) action used at run time."""
        return greedy_action(self.policy, state)

    def act_masked(self, state: np.ndarray, feasible: set[int]) -> int:
        """Highest-ranked action among the feasible set (plus the no-op).

        The observation encodes per-slot demand only in aggregate, so the
        executor supplies type-level feasibility; the policy contributes the
        priority ordering it learned.
        """
        logits, _ = self.policy.forward(np.asarray(state, dtype=np.float64)
                                        .reshape(1, -1))
        for a in np.argsort(-logits[0]):
            a = int(a)
            if a == 0 or a in feasible:
                return a
        return 0

    def act_sampled(self, state: np.ndarray, rng: np.random.Generator
                    ) -> tuple[int, float, float]:
        a, logp = sample_action(self.policy, state, rng)
        v, _ = self.value_net.forward(state.reshape(1, -1))
        return a, logp, float(v[0, 0])


def _rollout(env, policy: MLP, value_net: MLP, rng: np.random.Generator,
             max_steps: int = 10_000) -> Trajectory:
    traj = Trajectory()
    state = env.reset()
    for _ in range(max_steps):
        a, logp = sample_action(policy, np.asarray(state, dtype=np.float64), rng)
        v, _ = value_net.forward(np.asarray(state, dtype=np.float64).reshape(1, -1))
        next_state, reward, done = env.step(a)
        traj.states.append(np.asarray(state, dtype=np.float64))
        traj.actions.append(a)
        traj.log_probs.append(logp)
        traj.rewards.append(float(reward))
        traj.values.append(float(v[0, 0]))
        traj.dones.append(bool(done))
        state = next_state
        if done:
            return traj
    vb, _ = value_net.forward(np.asarray(state, dtype=np.float64).reshape(1, -1))
    traj.bootstrap_value = float(vb[0, 0])
    return traj


def train(env_factory, config: PPOConfig = PPOConfig(), seed: int = 0) -> TrainResult:
    """Rollout / GAE / clipped-update loop with seeded determinism.

    ``env_factory(episode_rng)`` must return an object with ``reset()`` and
    ``step(action) -> (state, reward, done)`` following the allocation-world
    contract. Rollouts run sequentially, so results depend only on the seed.
    """
    rng = check_random_state(seed)
    policy = MLP((config.state_dim, *config.hidden, config.n_actions), rng,
                 out_scale=0.01)
    value_net = MLP((config.state_dim, *config.hidden, 1), rng)
    opt_p = Adam(lr=config.learning_rate)
    opt_v = Adam(lr=config.learning_rate)

    curve: list[tuple[int, float, float]] = []
    episode_rewards: list[float] = []
    trailing: list[float] = []
    episodes = 0
    stopped = False

    while episodes < config.max_episodes and not stopped:
        batch_trajs = []
        n_roll = min(config.rollout_episodes, config.max_episodes - episodes)
        for _ in range(n_roll):
            env = env_factory(rng)
            traj = _rollout(env, policy, value_net, rng)
            batch_trajs.append(traj)
            episodes += 1
            ep_reward = float(sum(traj.rewards))
            episode_rewards.append(ep_reward)
            w = config.early_stop_window
            tmean = float(np.mean(episode_rewards[-w:]))
            trailing.append(tmean)
            curve.append((episodes, ep_reward, tmean))
            if episodes >= config.early_stop_window + config.early_stop_patience:
                then = trailing[episodes - config.early_stop_patience - 1]
                improvement = tmean - then
                if improvement < config.early_stop_rel_improvement * max(abs(then), 1e-8):
                    stopped = True
                    break

        states = np.concatenate([np.stack(t.states) for t in batch_trajs])
        actions = np.concatenate([np.asarray(t.actions) for t in batch_trajs])
        logps = np.concatenate([np.asarray(t.log_probs) for t in batch_trajs])
        advs, rets = [], []
        for t in batch_trajs:
            a, r = gae(t, config.gamma, config.lam)
            advs.append(a)
            rets.append(r)
        advantages = normalize_advantages(np.concatenate(advs))
        returns = np.concatenate(rets)

        n = states.shape[0]
        for _ in range(config.update_epochs):
            perm = rng.permutation(n)
            for start in range(0, n, config.minibatch_size):
                sel = perm[start:start + config.minibatch_size]
                minibatch = {
                    "states": states[sel], "actions": actions[sel],
                    "log_probs": logps[sel], "advantages": advantages[sel],
                    "returns": returns[sel],
                }
                _, gp, gv, _ = clipped_loss_and_grads(policy, value_net,
                                                      minibatch, config)
                policy.set_flat(opt_p.step(policy.get_flat(), gp))
                value_net.set_flat(opt_v.step(value_net.get_flat(), gv))

    return TrainResult(policy=policy, value_net=value_net, config=config,
                       curve=curve, episodes_run=episodes, stopped_early=stopped)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(result: TrainResult, path) -> None:
    cfg = result.config
    np.savez_compressed(
        path,
        version=np.array([CHECKPOINT_VERSION]),
        policy_sizes=np.array(result.policy.sizes),
        value_sizes=np.array(result.value_net.sizes),
        policy_params=result.policy.get_flat(),
        value_params=result.value_net.get_flat(),
        config=np.frombuffer(json.dumps({
            "state_dim": cfg.state_dim, "n_actions": cfg.n_actions,
            "hidden": list(cfg.hidden), "gamma": cfg.gamma, "lam": cfg.lam,
            "clip_eps": cfg.clip_eps, "learning_rate": cfg.learning_rate,
        }).encode(), dtype=np.uint8),
    )


def load_checkpoint(path) -> PPOAgent:
    data = np.load(path, allow_pickle=False)
    if int(data["version"][0]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data['version'][0]}")
    meta = json.loads(bytes(data["config"]).decode())
    cfg = PPOConfig(state_dim=meta["state_dim"], n_actions=meta["n_actions"],
                    hidden=tuple(meta["hidden"]))
    rng = np.random.default_rng(0)
    policy = MLP(tuple(int(s) for s in data["policy_sizes"]), rng)
    policy.set_flat(data["policy_params"])
    value_net = MLP(tuple(int(s) for s in data["value_sizes"]), rng)
    value_net.set_flat(data["value_params"])
    return PPOAgent(policy, value_net, cfg)
