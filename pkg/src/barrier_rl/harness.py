"""Training loop, normalization pipeline, periodic evaluation, CSV logging.

One call to :func:`train` is one fully deterministic run: the seed is split
into named substreams (network init, environment init, policy noise, update
sampling, evaluation), so identical ``(config, seed)`` produce an identical
``log.csv`` byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from barrier_rl.agents import (
    ALGOS,
    Agent,
    RsConfig,
    Transition,
    agent_to_json,
    agent_update_step,
    make_agent,
    rs_shape,
)
from barrier_rl.envs import ENV_NAMES, make_env
from barrier_rl.sac import ReplayBuffer, policy_mean_action, policy_sample

__all__ = [
    "TrainConfig",
    "RunningScale",
    "ScaleSet",
    "LogRow",
    "RunLog",
    "TrainingDiverged",
    "train",
    "evaluate",
    "normalize_pipeline",
    "write_log",
    "log_to_csv",
    "parse_config",
    "LOG_COLUMNS",
]

STD_FLOOR = 1e-8

LOG_COLUMNS = [
    "step",
    "algo",
    "env",
    "seed",
    "eval_return_mean",
    "eval_return_std",
    "eval_cost_mean",
    "eval_cost_std",
    "alpha",
    "beta",
    "mu",
    "actor_loss",
    "critic_loss_r",
    "critic_loss_c",
]


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; the run is aborted with a diagnostic row."""


@dataclass
class TrainConfig:
    algo: str = "csac_lb"
    env: str = "tilt"
    seed: int = 0
    total_steps: int = 100_000
    batch_size: int = 256
    gamma: float = 0.99
    gamma_cost: float = 0.99
    buffer_capacity: int = 1_000_000
    random_steps: int = 100
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    temp_lr: float = 3e-4
    beta_lr: float = 3e-4
    tau: float = 0.005
    init_temperature: float = 1.0
    mu: float = 3.0
    cost_limit: float = 0.0
    rs_penalty: float = -30.0
    normalize_obs: bool = True
    normalize_action: bool = True
    normalize_return: bool = True
    normalize_cost: bool = True
    clip_reward: tuple = (-10.0, 10.0)
    clip_cost: tuple = (-10.0, 10.0)
    eval_interval: int = 2000
    eval_episodes: int = 10
    target_update_every: int = 2

    def validate(self) -> "TrainConfig":
        if self.algo not in ALGOS:
            raise ValueError(f"algo: unknown value {self.algo!r}, expected one of {ALGOS}")
        if self.env not in ENV_NAMES:
            raise ValueError(f"env: unknown value {self.env!r}, expected one of {ENV_NAMES}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma: must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.gamma_cost < 1.0:
            raise ValueError(f"gamma_cost: must be in [0, 1), got {self.gamma_cost}")
        if self.algo == "csac_lb" and self.mu <= 1.0:
            raise ValueError(f"mu: csac_lb requires mu > 1, got {self.mu}")
        if self.mu <= 0:
            raise ValueError(f"mu: must be positive, got {self.mu}")
        for name in ("actor_lr", "critic_lr", "temp_lr", "beta_lr", "init_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name}: must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau: must be in [0, 1], got {self.tau}")
        for name in ("total_steps", "random_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name}: must be nonnegative")
        for name in (
            "batch_size",
            "buffer_capacity",
            "eval_interval",
            "eval_episodes",
            "target_update_every",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name}: must be positive")
        if self.rs_penalty >= 0:
            raise ValueError(f"rs_penalty: must be negative, got {self.rs_penalty}")
        for name in ("clip_reward", "clip_cost"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name}: lower bound must be below upper bound")
        return self


def parse_config(path) -> TrainConfig:
    """Read a JSON config whose keys mirror TrainConfig; absent keys default."""
    with open(path) as f:
        doc = json.load(f)
    known = set(TrainConfig.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for name in ("clip_reward", "clip_cost"):
        if name in doc:
            doc[name] = tuple(float(v) for v in doc[name])
    return TrainConfig(**doc).validate()


def config_to_json(config: TrainConfig) -> str:
    doc = asdict(config)
    doc["clip_reward"] = list(doc["clip_reward"])
    doc["clip_cost"] = list(doc["clip_cost"])
    return json.dumps(doc, indent=2)


class RunningScale:
    """Welford accumulator for a running mean/std with a 1e-8 std floor."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        if self.count == 1 and np.ndim(x) > 0:
            self.mean = np.zeros_like(x)
            self.m2 = np.zeros_like(x)
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def std(self):
        if self.count == 0:
            return 1.0
        return np.maximum(np.sqrt(self.m2 / self.count), STD_FLOOR)

    def divisor(self):
        """Scale divisor: 1 until two samples exist, the floored std after."""
        if self.count < 2:
            return 1.0
        return self.std

    def state(self) -> dict:
        return {
            "count": self.count,
            "mean": np.asarray(self.mean).tolist(),
            "m2": np.asarray(self.m2).tolist(),
        }

    @classmethod
    def from_state(cls, doc: dict) -> "RunningScale":
        rs = cls()
        rs.count = int(doc["count"])
        mean = np.asarray(doc["mean"], dtype=np.float64)
        m2 = np.asarray(doc["m2"], dtype=np.float64)
        rs.mean = mean if mean.ndim else float(mean)
        rs.m2 = m2 if m2.ndim else float(m2)
        return rs


@dataclass
class ScaleSet:
    obs: RunningScale = field(default_factory=RunningScale)
    episodic_return: RunningScale = field(default_factory=RunningScale)
    episodic_cost: RunningScale = field(default_factory=RunningScale)


def normalize_pipeline(obs, reward, cost, scales: ScaleSet, config: TrainConfig):
    """Apply the configured normalizations; any of obs/reward/cost may be None.

    Observations: (x - mean) / std elementwise.  Rewards and costs: divide by
    the running std of the episodic totals, then clip.  Scales are read, never
    updated, here.
    """
    obs_n = obs
    if obs is not None and config.normalize_obs and scales.obs.count > 0:
        obs_n = (np.asarray(obs) - scales.obs.mean) / scales.obs.std
    r_n = reward
    if reward is not None and config.normalize_return:
        r_n = np.clip(np.asarray(reward) / scales.episodic_return.divisor(), *config.clip_reward)
    c_n = cost
    if cost is not None and config.normalize_cost:
        c_n = np.clip(np.asarray(cost) / scales.episodic_cost.divisor(), *config.clip_cost)
    return obs_n, r_n, c_n


@dataclass
class LogRow:
    step: int
    algo: str
    env: str
    seed: int
    eval_return_mean: float
    eval_return_std: float
    eval_cost_mean: float
    eval_cost_std: float
    alpha: float
    beta: float  # nan renders as empty (non-Lagrangian)
    mu: float  # nan renders as empty (non-barrier)
    actor_loss: float
    critic_loss_r: float
    critic_loss_c: float


@dataclass
class RunLog:
    rows: list
    agent: Agent
    config: TrainConfig
    scales: ScaleSet


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def log_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, col)) for col in LOG_COLUMNS])
    return buf.getvalue()


def write_log(rows, path) -> None:
    Path(path).write_text(log_to_csv(rows))


def evaluate(agent: Agent, env, n_episodes: int, rng: np.random.Generator,
             scales: ScaleSet | None = None, config: TrainConfig | None = None):
    """Deterministic-policy evaluation on raw (pre-normalization) signals.

    Runs ``n_episodes`` full episodes with the mean action; touches no agent
    parameter, normalizer, or buffer.  Returns
    ``(return_mean, return_std, cost_mean, cost_std)``.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    returns, costs = [], []
    for _ in range(n_episodes):
        obs = env.reset(rng)
        ep_r = 0.0
        ep_c = 0.0
        done = False
        while not done:
            if scales is not None and config is not None:
                obs_n, _, _ = normalize_pipeline(obs, None, None, scales, config)
            else:
                obs_n = obs
            action = policy_mean_action(agent.policy, obs_n)
            result = env.step(action)
            ep_r += result.reward
            ep_c += result.cost
            obs = result.obs
            done = result.done
        returns.append(ep_r)
        costs.append(ep_c)
    returns = np.asarray(returns)
    costs = np.asarray(costs)
    return (
        float(returns.mean()),
        float(returns.std()),
        float(costs.mean()),
        float(costs.std()),
    )


def train(config: TrainConfig, out_dir=None) -> RunLog:
    """Run Algorithm-1-style training for ``config.total_steps`` env steps.

    The first ``random_steps`` actions are uniform; one agent update happens
    after every later step (a no-op until the buffer holds a full batch).
    Every ``eval_interval`` steps a deterministic evaluation row is logged.
    """
    config.validate()
    ss = np.random.SeedSequence(config.seed)
    net_rng, env_rng, noise_rng, update_rng, eval_rng = (
        np.random.default_rng(child) for child in ss.spawn(5)
    )

    env = make_env(config.env)
    eval_env = make_env(config.env)
    agent = make_agent(
        config.algo,
        env.obs_dim,
        env.act_dim,
        net_rng,
        mu=config.mu,
        cost_limit=config.cost_limit,
        init_temperature=config.init_temperature,
        beta_lr=config.beta_lr,
        rs_penalty=config.rs_penalty,
    )
    buffer = ReplayBuffer(config.buffer_capacity, env.obs_dim, env.act_dim)
    scales = ScaleSet()
    rows: list[LogRow] = []
    last_metrics = {"actor_loss": 0.0, "critic_loss_r": 0.0, "critic_loss_c": 0.0}

    def batch_transform(batch: dict) -> dict:
        b = dict(batch)
        b["s"], b["r"], b["c"] = normalize_pipeline(b["s"], b["r"], b["c"], scales, config)
        b["s_next"], _, _ = normalize_pipeline(b["s_next"], None, None, scales, config)
        return b

    def emit_row(step: int) -> LogRow:
        r_mean, r_std, c_mean, c_std = evaluate(
            agent, eval_env, config.eval_episodes, eval_rng, scales, config
        )
        return LogRow(
            step=step,
            algo=config.algo,
            env=config.env,
            seed=config.seed,
            eval_return_mean=r_mean,
            eval_return_std=r_std,
            eval_cost_mean=c_mean,
            eval_cost_std=c_std,
            alpha=agent.temp.alpha,
            beta=agent.lag.beta if config.algo == "sac_lag" else math.nan,
            mu=config.mu if config.algo == "csac_lb" else math.nan,
            actor_loss=float(last_metrics["actor_loss"]),
            critic_loss_r=float(last_metrics["critic_loss_r"]),
            critic_loss_c=float(last_metrics["critic_loss_c"]),
        )

    obs = env.reset(env_rng) if config.total_steps > 0 else None
    ep_return = 0.0
    ep_cost = 0.0
    final_step = config.total_steps

    for step in range(1, config.total_steps + 1):
        if config.normalize_obs:
            scales.obs.update(obs)
        if step <= config.random_steps:
            action = noise_rng.uniform(-1.0, 1.0, size=env.act_dim)
        else:
            obs_n, _, _ = normalize_pipeline(obs, None, None, scales, config)
            noise = noise_rng.standard_normal(env.act_dim)
            action, _ = policy_sample(agent.policy, obs_n, noise)

        result = env.step(action)
        ep_return += result.reward
        ep_cost += result.cost
        transition = Transition(obs, action, result.reward, result.cost, result.obs, result.done)
        if config.algo == "sac_rs":
            transition = rs_shape(transition, agent.rs)
        buffer.push(transition)
        episode_over = result.done or transition.done

        if step > config.random_steps:
            metrics = agent_update_step(agent, buffer, config, update_rng, batch_transform)
            if metrics["updated"]:
                for key in ("actor_loss", "critic_loss_r", "critic_loss_c"):
                    last_metrics[key] = metrics[key]
                bad = [
                    k
                    for k in ("actor_loss", "critic_loss_r", "critic_loss_c")
                    if not math.isfinite(metrics[k])
                ]
                if bad:
                    rows.append(emit_diagnostic_row(config, agent, step, last_metrics))
                    _write_outputs(out_dir, rows, config, agent, scales, step)
                    raise TrainingDiverged(
                        f"non-finite {', '.join(bad)} at step {step}"
                    )

        if episode_over:
            scales.episodic_return.update(ep_return)
            scales.episodic_cost.update(ep_cost)
            ep_return = 0.0
            ep_cost = 0.0
            obs = env.reset(env_rng)
        else:
            obs = result.obs

        if step % config.eval_interval == 0:
            rows.append(emit_row(step))

    _write_outputs(out_dir, rows, config, agent, scales, final_step)
    return RunLog(rows, agent, config, scales)


def emit_diagnostic_row(config, agent, step, metrics) -> LogRow:
    return LogRow(
        step=step,
        algo=config.algo,
        env=config.env,
        seed=config.seed,
        eval_return_mean=math.nan,
        eval_return_std=math.nan,
        eval_cost_mean=math.nan,
        eval_cost_std=math.nan,
        alpha=agent.temp.alpha,
        beta=agent.lag.beta if config.algo == "sac_lag" else math.nan,
        mu=config.mu if config.algo == "csac_lb" else math.nan,
        actor_loss=float(metrics["actor_loss"]),
        critic_loss_r=float(metrics["critic_loss_r"]),
        critic_loss_c=float(metrics["critic_loss_c"]),
    )


def checkpoint_to_json(agent: Agent, scales: ScaleSet, config: TrainConfig, step: int) -> str:
    doc = json.loads(agent_to_json(agent, step))
    doc["env"] = config.env
    doc["obs_scale"] = scales.obs.state()
    return json.dumps(doc)


def _write_outputs(out_dir, rows, config, agent, scales, step) -> None:
    if out_dir is None:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_log(rows, out / "log.csv")
    (out / "config.json").write_text(config_to_json(config))
    (out / "checkpoint.json").write_text(checkpoint_to_json(agent, scales, config, step))
