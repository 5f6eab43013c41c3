"""Soft actor-critic over the environment's stacked state vectors.

Twin critics with clipped double-Q targets, a tanh-diagonal-Gaussian
actor, and a learnable entropy temperature. The policy only ever sees
the 48-dim stacked state; when the reward is learned, each new
observation is rendered, embedded, and scored online with the frozen
reward model. Losses live in module-level functions so their gradients
can be finite-difference checked in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .checkpoint import load_checkpoint, save_checkpoint
from .env import EMBODIMENTS, SweepEnv, render
from .nn import Adam, Linear, Mlp, zero_grads
from .reward import RewardModel, reward as learned_reward

REWARD_SOURCES = ("env", "learned", "learned+sparse")
# full-scale step budgets per embodiment; desk runs usually shrink these
DEFAULT_STEPS = {
    "longstick": 75_000,
    "mediumstick": 225_000,
    "shortstick": 500_000,
    "gripper": 500_000,
}
_LOG_2PI = float(np.log(2.0 * np.pi))
_SQUASH_EPS = 1e-6


@dataclass(frozen=True)
class SacConfig:
    total_steps: int = 75_000
    discount: float = 0.99
    replay_capacity: int = 1_000_000
    batch_size: int = 256
    seed_steps: int = 1_000
    target_ema: float = 0.005
    update_period: int = 2  # actor, temperature, and target updates
    init_temperature: float = 0.1
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    hidden: int = 256
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eval_period: int = 5_000
    eval_episodes: int = 50
    seed: int = 0

    def __post_init__(self):
        positive = (
            ("total_steps", self.total_steps + 1),  # 0 train steps is legal
            ("discount", self.discount),
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("seed_steps", self.seed_steps),
            ("target_ema", self.target_ema),
            ("update_period", self.update_period),
            ("init_temperature", self.init_temperature),
            ("hidden", self.hidden),
            ("learning_rate", self.learning_rate),
            ("eval_period", self.eval_period),
            ("eval_episodes", self.eval_episodes),
        )
        for name, value in positive:
            if not value > 0:
                raise ValueError(f"{name} must be positive")
        if not self.log_std_min < self.log_std_max:
            raise ValueError("log-std bounds must be ordered")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")


class ReplayBuffer:
    """Preallocated FIFO ring of transitions."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.act = np.zeros((capacity, act_dim), dtype=np.float32)
        self.rew = np.zeros(capacity, dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, obs, act, rew, next_obs, done) -> None:
        i = self._next
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if self._size == 0:
            raise ValueError("sampling from an empty replay buffer")
        idx = rng.integers(self._size, size=batch_size)
        return {
            "obs": self.obs[idx].astype(np.float64),
            "act": self.act[idx].astype(np.float64),
            "rew": self.rew[idx].astype(np.float64),
            "next_obs": self.next_obs[idx].astype(np.float64),
            "done": self.done[idx].astype(np.float64),
        }


# -- loss functions (tape-level, finite-difference checkable) ----------------


def bounded_log_std(raw, lo: float, hi: float):
    """Map unbounded head output into [lo, hi] via a rescaled tanh."""
    return ad.add(lo, ad.mul(0.5 * (hi - lo), ad.add(ad.tanh(raw), 1.0)))


def actor_heads(trunk: Mlp, mean_head: Linear, std_head: Linear, obs, lo, hi):
    h = trunk(ad.as_var(obs))
    return mean_head(h), bounded_log_std(std_head(h), lo, hi)


def squashed_sample(mean, log_std, eps: np.ndarray):
    """Reparameterized tanh-Gaussian action and its log-probability.

    With u = mean + std * eps the density term (u - mean)/std is exactly
    eps, so the log-prob is a function of log_std and the squash
    correction only."""
    std = ad.exp(log_std)
    u = ad.add(mean, ad.mul(std, eps))
    action = ad.tanh(u)
    per_dim = ad.sub(
        ad.mul(-0.5, eps * eps + _LOG_2PI),
        ad.add(log_std, ad.log(ad.sub(1.0 + _SQUASH_EPS, ad.square(action)))),
    )
    return action, ad.vsum(per_dim, axis=1)


def critic_q(critic: Mlp, obs, act):
    q = critic(ad.concat([ad.as_var(obs), ad.as_var(act)], axis=1))
    return ad.reshape(q, (-1,))


def critic_loss(critic1: Mlp, critic2: Mlp, obs, act, target: np.ndarray):
    e1 = ad.sub(critic_q(critic1, obs, act), target)
    e2 = ad.sub(critic_q(critic2, obs, act), target)
    return ad.add(ad.vmean(ad.square(e1)), ad.vmean(ad.square(e2)))


def actor_loss(
    trunk: Mlp,
    mean_head: Linear,
    std_head: Linear,
    critic1: Mlp,
    critic2: Mlp,
    alpha: float,
    obs: np.ndarray,
    eps: np.ndarray,
    lo: float,
    hi: float,
):
    """Entropy-regularized policy objective; returns (loss, logp)."""
    mean, log_std = actor_heads(trunk, mean_head, std_head, obs, lo, hi)
    action, logp = squashed_sample(mean, log_std, eps)
    q = ad.minimum(critic_q(critic1, obs, action), critic_q(critic2, obs, action))
    return ad.vmean(ad.sub(ad.mul(alpha, logp), q)), logp


def alpha_loss(log_alpha: Var, logp: np.ndarray, target_entropy: float):
    return ad.vmean(ad.mul(ad.exp(log_alpha), -(logp + target_entropy)))


# -- agent --------------------------------------------------------------------


class SacAgent:
    def __init__(self, obs_dim: int, act_dim: int, cfg: SacConfig):
        self.obs_dim, self.act_dim, self.cfg = obs_dim, act_dim, cfg
        self.target_entropy = -float(act_dim)
        h = cfg.hidden
        rng = np.random.default_rng(cfg.seed)
        self.trunk = Mlp.create(rng, [obs_dim, h, h], ["relu", "relu"], init="orthogonal")
        self.mean_head = Linear.create(rng, h, act_dim, init="orthogonal")
        self.std_head = Linear.create(rng, h, act_dim, init="orthogonal")
        qs = [obs_dim + act_dim, h, h, 1]
        acts = ["relu", "relu", "identity"]
        self.critic1 = Mlp.create(rng, qs, acts, init="orthogonal")
        self.critic2 = Mlp.create(rng, qs, acts, init="orthogonal")
        self.target1 = _clone_mlp(self.critic1)
        self.target2 = _clone_mlp(self.critic2)
        self.log_alpha = Var(np.array(np.log(cfg.init_temperature)), needs_grad=True)

        kw = dict(lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2)
        self._actor_params = (
            self.trunk.parameters()
            + [self.mean_head.weight, self.mean_head.bias]
            + [self.std_head.weight, self.std_head.bias]
        )
        self._critic_params = self.critic1.parameters() + self.critic2.parameters()
        self.actor_opt = Adam(self._actor_params, **kw)
        self.critic_opt = Adam(self._critic_params, **kw)
        self.alpha_opt = Adam([self.log_alpha], **kw)

    # ---- numpy fast paths (no tape)

    def _trunk_np(self, obs: np.ndarray) -> np.ndarray:
        x = obs
        for layer in self.trunk.layers:
            x = np.maximum(x @ layer.weight.data + layer.bias.data, 0.0)
        return x

    def actor_forward_np(self, obs: np.ndarray):
        h = self._trunk_np(np.atleast_2d(obs))
        mean = h @ self.mean_head.weight.data + self.mean_head.bias.data
        raw = h @ self.std_head.weight.data + self.std_head.bias.data
        lo, hi = self.cfg.log_std_min, self.cfg.log_std_max
        return mean, lo + 0.5 * (hi - lo) * (np.tanh(raw) + 1.0)

    def _q_np(self, critic: Mlp, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
        x = np.concatenate([obs, act], axis=1)
        for layer, act_name in zip(critic.layers, critic.activations):
            x = x @ layer.weight.data + layer.bias.data
            if act_name == "relu":
                x = np.maximum(x, 0.0)
        return x.reshape(-1)

    def sample_np(self, obs: np.ndarray, rng: np.random.Generator):
        """Stochastic actions plus exact log-probs, off the tape."""
        mean, log_std = self.actor_forward_np(obs)
        eps = rng.standard_normal(mean.shape)
        action = np.tanh(mean + np.exp(log_std) * eps)
        logp = (
            -0.5 * (eps * eps + _LOG_2PI)
            - log_std
            - np.log(1.0 + _SQUASH_EPS - action * action)
        ).sum(axis=1)
        return action, logp

    def select_action(
        self, obs: np.ndarray, deterministic: bool, rng: np.random.Generator | None = None
    ) -> np.ndarray:
        mean, log_std = self.actor_forward_np(obs)
        if deterministic:
            return np.tanh(mean[0])
        return np.tanh(mean[0] + np.exp(log_std[0]) * rng.standard_normal(self.act_dim))

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_alpha.data))

    def policy(self):
        """Frozen deterministic policy closure for evaluation."""
        return lambda obs, state: self.select_action(obs, deterministic=True)

    # ---- updates

    def update_critic(self, batch: dict, rng: np.random.Generator) -> float:
        next_act, next_logp = self.sample_np(batch["next_obs"], rng)
        q_t = np.minimum(
            self._q_np(self.target1, batch["next_obs"], next_act),
            self._q_np(self.target2, batch["next_obs"], next_act),
        )
        y = batch["rew"] + self.cfg.discount * (1.0 - batch["done"]) * (
            q_t - self.temperature * next_logp
        )
        loss = critic_loss(self.critic1, self.critic2, batch["obs"], batch["act"], y)
        if not np.isfinite(loss.data):
            raise RuntimeError("critic loss became non-finite")
        zero_grads(self._critic_params)
        loss.backward()
        self.critic_opt.step()
        return float(loss.data)

    def update_actor_and_alpha(self, obs: np.ndarray, rng: np.random.Generator) -> float:
        eps = rng.standard_normal((obs.shape[0], self.act_dim))
        loss, logp = actor_loss(
            self.trunk,
            self.mean_head,
            self.std_head,
            self.critic1,
            self.critic2,
            self.temperature,
            obs,
            eps,
            self.cfg.log_std_min,
            self.cfg.log_std_max,
        )
        if not np.isfinite(loss.data):
            raise RuntimeError("actor loss became non-finite")
        zero_grads(self._actor_params + self._critic_params)
        loss.backward()
        self.actor_opt.step()

        a_loss = alpha_loss(self.log_alpha, logp.data, self.target_entropy)
        zero_grads([self.log_alpha])
        a_loss.backward()
        self.alpha_opt.step()
        return float(loss.data)

    def soft_update_targets(self, ema: float | None = None) -> None:
        m = self.cfg.target_ema if ema is None else ema
        for critic, target in ((self.critic1, self.target1), (self.critic2, self.target2)):
            for p, t in zip(critic.parameters(), target.parameters()):
                t.data = (1.0 - m) * t.data + m * p.data

    def parameters(self) -> list[Var]:
        return (
            self._actor_params
            + self._critic_params
            + self.target1.parameters()
            + self.target2.parameters()
            + [self.log_alpha]
        )


def _clone_mlp(mlp: Mlp) -> Mlp:
    layers = [
        Linear(
            weight=Var(layer.weight.data.copy(), needs_grad=False),
            bias=Var(layer.bias.data.copy(), needs_grad=False),
        )
        for layer in mlp.layers
    ]
    return Mlp(layers=layers, activations=list(mlp.activations))


# -- training and evaluation ---------------------------------------------------


def _episode_stats(policy, embodiment: str, seed: int) -> tuple[float, float]:
    env = SweepEnv(embodiment)
    obs = env.reset(seed)
    total, last = 0.0, 0.0
    done = False
    while not done:
        obs, r, done = env.step(policy(obs, env.state))
        total += r
        last = r
    return last, total  # final in-zone fraction, episodic return


def evaluate(policy, embodiment: str, episodes: int = 50, seed: int = 0) -> float:
    """Mean end-of-episode in-zone fraction under deterministic actions."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    return float(
        np.mean([_episode_stats(policy, embodiment, seed + i)[0] for i in range(episodes)])
    )


def _eval_stats(policy, embodiment, episodes, seed) -> tuple[float, float]:
    stats = [_episode_stats(policy, embodiment, seed + i) for i in range(episodes)]
    return float(np.mean([s[0] for s in stats])), float(np.mean([s[1] for s in stats]))


def train_policy(
    embodiment: str,
    reward_source: str,
    cfg: SacConfig,
    reward_model: RewardModel | None = None,
    on_eval=None,
    stop_success: float | None = None,
):
    """Run SAC; returns (agent, curve rows).

    Curve rows are (step, success_rate, mean_episode_reward, actor_loss,
    critic_loss, temperature), one per evaluation. `stop_success` ends
    training early once an evaluation reaches that success rate (the row
    is still recorded)."""
    if embodiment not in EMBODIMENTS:
        raise ValueError(f"unknown embodiment {embodiment!r}")
    if reward_source not in REWARD_SOURCES:
        raise ValueError(f"unknown reward source {reward_source!r}")
    if reward_source != "env" and reward_model is None:
        raise ValueError(f"reward source {reward_source!r} needs a reward model")

    env = SweepEnv(embodiment)
    act_dim = EMBODIMENTS[embodiment].action_dim
    agent = SacAgent(16 * SweepEnv.STACK, act_dim, cfg)
    capacity = min(cfg.replay_capacity, cfg.seed_steps + cfg.total_steps + 1)
    buffer = ReplayBuffer(capacity, agent.obs_dim, act_dim)
    rng = np.random.default_rng(cfg.seed)

    def step_reward(env_r: float) -> float:
        if reward_source == "env":
            return env_r
        grid = render(env.state, reward_model.encoder.grid)
        r = learned_reward(reward_model, grid)
        if reward_source == "learned+sparse":
            r += env_r
        return r

    obs = env.reset(int(rng.integers(2**31 - 1)))
    rows: list[tuple] = []
    actor_l, critic_l = float("nan"), float("nan")
    for step in range(1, cfg.seed_steps + cfg.total_steps + 1):
        if step <= cfg.seed_steps:
            action = rng.uniform(-1.0, 1.0, act_dim)
        else:
            action = agent.select_action(obs, deterministic=False, rng=rng)
        next_obs, env_r, done = env.step(action)
        # the only episode end is the horizon, a time limit rather than a
        # terminal state, so the target keeps bootstrapping through it
        buffer.push(obs, action, step_reward(env_r), next_obs, 0.0)
        obs = env.reset(int(rng.integers(2**31 - 1))) if done else next_obs

        if step > cfg.seed_steps:
            batch = buffer.sample(cfg.batch_size, rng)
            critic_l = agent.update_critic(batch, rng)
            if step % cfg.update_period == 0:
                actor_l = agent.update_actor_and_alpha(batch["obs"], rng)
                agent.soft_update_targets()

            train_step = step - cfg.seed_steps
            if train_step % cfg.eval_period == 0 or train_step == cfg.total_steps:
                success, mean_ret = _eval_stats(
                    agent.policy(), embodiment, cfg.eval_episodes, cfg.seed
                )
                rows.append(
                    (train_step, success, mean_ret, actor_l, critic_l, agent.temperature)
                )
                if on_eval is not None:
                    on_eval(agent, rows[-1])
                if stop_success is not None and success >= stop_success:
                    break
    if cfg.total_steps == 0:
        success, mean_ret = _eval_stats(
            agent.policy(), embodiment, cfg.eval_episodes, cfg.seed
        )
        rows.append((0, success, mean_ret, actor_l, critic_l, agent.temperature))
    return agent, rows


# -- persistence ----------------------------------------------------------------


def save_policy(agent: SacAgent, meta: dict, path: str | Path) -> None:
    tensors: dict[str, np.ndarray] = {"log_alpha": agent.log_alpha.data}
    named = {
        "trunk": agent.trunk,
        "critic1": agent.critic1,
        "critic2": agent.critic2,
        "target1": agent.target1,
        "target2": agent.target2,
    }
    for name, mlp in named.items():
        for i, layer in enumerate(mlp.layers):
            tensors[f"{name}.{i}.weight"] = layer.weight.data
            tensors[f"{name}.{i}.bias"] = layer.bias.data
    for name, head in (("mean_head", agent.mean_head), ("std_head", agent.std_head)):
        tensors[f"{name}.weight"] = head.weight.data
        tensors[f"{name}.bias"] = head.bias.data
    cfg = agent.cfg
    full_meta = {
        "kind": "policy",
        "obs_dim": agent.obs_dim,
        "act_dim": agent.act_dim,
        "hidden": cfg.hidden,
        "log_std_min": cfg.log_std_min,
        "log_std_max": cfg.log_std_max,
        **meta,
    }
    save_checkpoint(path, tensors, full_meta)


def load_policy(path: str | Path) -> tuple[SacAgent, dict]:
    """Rebuild an agent for evaluation; optimizer state is not persisted."""
    tensors, meta = load_checkpoint(path)
    cfg = SacConfig(
        hidden=int(meta["hidden"]),
        log_std_min=float(meta["log_std_min"]),
        log_std_max=float(meta["log_std_max"]),
    )
    agent = SacAgent(int(meta["obs_dim"]), int(meta["act_dim"]), cfg)
    named = {
        "trunk": agent.trunk,
        "critic1": agent.critic1,
        "critic2": agent.critic2,
        "target1": agent.target1,
        "target2": agent.target2,
    }
    for name, mlp in named.items():
        for i, layer in enumerate(mlp.layers):
            layer.weight.data = tensors[f"{name}.{i}.weight"]
            layer.bias.data = tensors[f"{name}.{i}.bias"]
    for name, head in (("mean_head", agent.mean_head), ("std_head", agent.std_head)):
        head.weight.data = tensors[f"{name}.weight"]
        head.bias.data = tensors[f"{name}.bias"]
    agent.log_alpha.data = tensors["log_alpha"]
    return agent, meta
