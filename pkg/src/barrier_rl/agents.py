"""The three agents and their per-step update.

All agents share the same skeleton: a squashed Gaussian policy, a reward
double-Q pair and a cost double-Q pair with polyak targets, and a learned
entropy temperature.  They differ only in the actor penalty:

* ``csac_lb``  - shifted log barrier on the pessimistic cost-critic value
* ``sac_lag``  - Lagrange multiplier beta times the cost-critic value,
  with beta adapted by dual gradient descent
* ``sac_rs``   - no penalty; safety comes from reward shaping at the
  environment boundary (see :func:`rs_shape`)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from barrier_rl.barriers import BarrierConfig, shifted_barrier, shifted_barrier_grad
from barrier_rl.nets import (
    DEFAULT_HIDDEN,
    AdamState,
    DenseNet,
    _backward,
    _forward_cache,
    adam_init,
    adam_step,
    init_net,
    net_from_json,
    net_to_json,
    polyak_update,
)
from barrier_rl.sac import (
    DoubleQ,
    EntropyTemperature,
    GaussianPolicy,
    ReplayBuffer,
    Transition,
    cost_critic_target,
    policy_backward,
    policy_sample_cache,
    reward_critic_target,
)

__all__ = [
    "SacLagState",
    "RsConfig",
    "Agent",
    "make_agent",
    "csaclb_actor_loss",
    "saclag_actor_loss",
    "sac_actor_loss",
    "saclag_beta_update",
    "rs_shape",
    "agent_update_step",
    "agent_to_json",
    "agent_from_json",
]

ALGOS = ("csac_lb", "sac_lag", "sac_rs")


@dataclass
class SacLagState:
    """Nonnegative Lagrange multiplier and its dual-descent step size."""

    beta: float = 0.0
    beta_lr: float = 3e-4

    def __post_init__(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass
class RsConfig:
    """Terminal penalty added to the reward on any constraint violation."""

    penalty: float = -30.0

    def __post_init__(self) -> None:
        if self.penalty >= 0:
            raise ValueError("penalty must be negative")


def _actor_loss(batch, policy, reward_q, cost_q, alpha, noise, penalty, penalty_grad):
    """Shared actor loss core.

    ``penalty``/``penalty_grad`` map the pessimistic cost-critic value to the
    constraint penalty and its derivative; pass ``None`` for plain SAC.
    Returns ``(loss, policy grads, aux)`` with ``aux`` carrying the sampled
    logp batch and the mean cost-critic value.
    """
    s = batch["s"]
    n = s.shape[0]
    a, logp, cache = policy_sample_cache(policy, s, noise)
    x = np.concatenate([s, a], axis=1)
    obs_dim = s.shape[1]

    qr1, c_r1 = _forward_cache(reward_q.q1, x)
    qr2, c_r2 = _forward_cache(reward_q.q2, x)
    qr1, qr2 = qr1[:, 0], qr2[:, 0]
    pick1 = qr1 <= qr2
    q_min = np.where(pick1, qr1, qr2)

    qc1, c_c1 = _forward_cache(cost_q.q1, x)
    qc2, c_c2 = _forward_cache(cost_q.q2, x)
    qc1, qc2 = qc1[:, 0], qc2[:, 0]
    pickc1 = qc1 >= qc2
    q_max = np.where(pickc1, qc1, qc2)

    pen = penalty(q_max) if penalty is not None else 0.0
    loss = float(np.mean(alpha * logp - q_min + pen))

    # dLoss/daction through the selected critic branches
    def input_grad(net, cache_, upstream_col):
        _, _, dx = _backward(net, cache_, upstream_col[:, None], want_params=False)
        return dx[:, obs_dim:]

    dL_da = -input_grad(reward_q.q1, c_r1, pick1 / n)
    dL_da -= input_grad(reward_q.q2, c_r2, (~pick1) / n)
    if penalty is not None:
        pgrad = penalty_grad(q_max)
        dL_da += input_grad(cost_q.q1, c_c1, pickc1 * pgrad / n)
        dL_da += input_grad(cost_q.q2, c_c2, (~pickc1) * pgrad / n)

    grads = policy_backward(policy, cache, dL_da, np.full(n, alpha / n))
    aux = {"logp": logp, "mean_qc": float(np.mean(q_max))}
    return loss, grads, aux


def csaclb_actor_loss(batch, policy, reward_q, cost_q, alpha, cfg: BarrierConfig, noise):
    """Barrier actor loss: alpha*logp - min Q_r + barrier(max Q_c)."""
    return _actor_loss(
        batch,
        policy,
        reward_q,
        cost_q,
        alpha,
        noise,
        penalty=lambda q: shifted_barrier(q, cfg),
        penalty_grad=lambda q: shifted_barrier_grad(q, cfg),
    )


def saclag_actor_loss(batch, policy, reward_q, cost_q, alpha, beta, noise):
    """Lagrangian actor loss: alpha*logp - min Q_r + beta*max Q_c."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return _actor_loss(
        batch,
        policy,
        reward_q,
        cost_q,
        alpha,
        noise,
        penalty=lambda q: beta * q,
        penalty_grad=lambda q: np.full_like(q, beta),
    )


def sac_actor_loss(batch, policy, reward_q, cost_q, alpha, noise):
    """Plain SAC actor loss; the cost critic does not enter."""
    return _actor_loss(
        batch, policy, reward_q, cost_q, alpha, noise, penalty=None, penalty_grad=None
    )


def saclag_beta_update(state: SacLagState, mean_qc: float, d: float) -> SacLagState:
    """Dual gradient step: beta grows while the critic predicts cost above d."""
    state.beta = max(0.0, state.beta + state.beta_lr * (mean_qc - d))
    return state


def rs_shape(transition: Transition, rs: RsConfig) -> Transition:
    """Reward shaping: a violating step gets the terminal penalty and ends
    the episode."""
    if transition.c > 0:
        return Transition(
            transition.s,
            transition.a,
            transition.r + rs.penalty,
            transition.c,
            transition.s_next,
            True,
        )
    return transition


class Agent:
    """One training run's mutable state: networks, targets, optimizers."""

    def __init__(
        self,
        algo: str,
        policy: GaussianPolicy,
        reward_q: DoubleQ,
        cost_q: DoubleQ,
        temp: EntropyTemperature,
        barrier: BarrierConfig,
        lag: SacLagState,
        rs: RsConfig,
    ):
        if algo not in ALGOS:
            raise ValueError(f"unknown algo {algo!r}")
        if algo == "csac_lb" and barrier.mu <= 1:
            raise ValueError("csac_lb requires mu > 1")
        self.algo = algo
        self.policy = policy
        self.reward_q = reward_q
        self.cost_q = cost_q
        self.reward_q_target = reward_q.copy()
        self.cost_q_target = cost_q.copy()
        self.temp = temp
        self.barrier = barrier
        self.lag = lag
        self.rs = rs
        self.opt_policy = adam_init(policy.trunk.params())
        self.opt_qr1 = adam_init(reward_q.q1.params())
        self.opt_qr2 = adam_init(reward_q.q2.params())
        self.opt_qc1 = adam_init(cost_q.q1.params())
        self.opt_qc2 = adam_init(cost_q.q2.params())
        self.opt_temp = adam_init([np.zeros(1)])
        self.critic_steps = 0
        self.env_steps = 0


def make_agent(
    algo: str,
    obs_dim: int,
    act_dim: int,
    rng: np.random.Generator,
    hidden=DEFAULT_HIDDEN,
    mu: float = 3.0,
    cost_limit: float = 0.0,
    init_temperature: float = 1.0,
    beta_lr: float = 3e-4,
    rs_penalty: float = -30.0,
) -> Agent:
    hidden = list(hidden)
    policy = GaussianPolicy(init_net([obs_dim, *hidden, 2 * act_dim], rng), act_dim)
    q_sizes = [obs_dim + act_dim, *hidden, 1]
    reward_q = DoubleQ(init_net(q_sizes, rng), init_net(q_sizes, rng))
    cost_q = DoubleQ(init_net(q_sizes, rng), init_net(q_sizes, rng))
    temp = EntropyTemperature(
        log_alpha=math.log(init_temperature), target_entropy=-float(act_dim)
    )
    return Agent(
        algo,
        policy,
        reward_q,
        cost_q,
        temp,
        BarrierConfig(mu=mu, cost_limit=cost_limit),
        SacLagState(beta_lr=beta_lr),
        RsConfig(penalty=rs_penalty),
    )


def _critic_step(net: DenseNet, opt: AdamState, x, y, lr) -> float:
    out, cache = _forward_cache(net, x)
    q = out[:, 0]
    err = q - y
    n = x.shape[0]
    dws, dbs, _ = _backward(net, cache, (2.0 * err / n)[:, None], want_params=True)
    grads = []
    for dw, db in zip(dws, dbs):
        grads.append(dw)
        grads.append(db)
    adam_step(opt, net.params(), grads, lr)
    return float(np.mean(err * err))


def agent_update_step(
    agent: Agent,
    buffer: ReplayBuffer,
    config,
    rng: np.random.Generator,
    batch_transform=None,
) -> dict:
    """One full gradient update (critics, actor, temperature, dual, targets).

    ``config`` needs: batch_size, gamma, gamma_cost, critic_lr, actor_lr,
    temp_lr, tau, target_update_every.  ``batch_transform``, when given,
    maps a raw sampled batch to a normalized one before any gradient math.
    Returns scalar metrics; ``updated`` is 0.0 when the buffer is still
    under-filled and nothing moved.
    """
    metrics = {
        "updated": 0.0,
        "critic_loss_r": math.nan,
        "critic_loss_c": math.nan,
        "actor_loss": math.nan,
        "alpha": agent.temp.alpha,
        "beta": agent.lag.beta if agent.algo == "sac_lag" else math.nan,
        "mu": agent.barrier.mu if agent.algo == "csac_lb" else math.nan,
    }
    if len(buffer) < config.batch_size:
        return metrics

    batch = buffer.sample(config.batch_size, rng)
    if batch_transform is not None:
        batch = batch_transform(batch)
    s, a = batch["s"], batch["a"]
    x = np.concatenate([s, a], axis=1)

    # 1) reward critics
    y_r = reward_critic_target(
        batch, agent.reward_q_target, agent.policy, config.gamma, agent.temp.alpha, rng
    )
    loss_r = _critic_step(agent.reward_q.q1, agent.opt_qr1, x, y_r, config.critic_lr)
    loss_r += _critic_step(agent.reward_q.q2, agent.opt_qr2, x, y_r, config.critic_lr)

    # 2) cost critics (trained for every algo; only some actors consume them)
    y_c = cost_critic_target(
        batch, agent.cost_q_target, agent.policy, config.gamma_cost, rng
    )
    loss_c = _critic_step(agent.cost_q.q1, agent.opt_qc1, x, y_c, config.critic_lr)
    loss_c += _critic_step(agent.cost_q.q2, agent.opt_qc2, x, y_c, config.critic_lr)

    # 3) actor
    noise = rng.standard_normal((config.batch_size, agent.policy.act_dim))
    alpha = agent.temp.alpha
    if agent.algo == "csac_lb":
        actor_loss, grads, aux = csaclb_actor_loss(
            batch, agent.policy, agent.reward_q, agent.cost_q, alpha, agent.barrier, noise
        )
    elif agent.algo == "sac_lag":
        actor_loss, grads, aux = saclag_actor_loss(
            batch, agent.policy, agent.reward_q, agent.cost_q, alpha, agent.lag.beta, noise
        )
    else:
        actor_loss, grads, aux = sac_actor_loss(
            batch, agent.policy, agent.reward_q, agent.cost_q, alpha, noise
        )
    adam_step(agent.opt_policy, agent.policy.trunk.params(), grads, config.actor_lr)

    # 4) temperature
    from barrier_rl.sac import temperature_update

    temperature_update(agent.temp, aux["logp"], config.temp_lr, adam=agent.opt_temp)

    # 5) dual variable
    if agent.algo == "sac_lag":
        saclag_beta_update(agent.lag, aux["mean_qc"], agent.barrier.cost_limit)

    # 6) target networks
    agent.critic_steps += 1
    if agent.critic_steps % config.target_update_every == 0:
        polyak_update(
            agent.reward_q_target.q1.params(), agent.reward_q.q1.params(), config.tau
        )
        polyak_update(
            agent.reward_q_target.q2.params(), agent.reward_q.q2.params(), config.tau
        )
        polyak_update(
            agent.cost_q_target.q1.params(), agent.cost_q.q1.params(), config.tau
        )
        polyak_update(
            agent.cost_q_target.q2.params(), agent.cost_q.q2.params(), config.tau
        )

    metrics.update(
        updated=1.0,
        critic_loss_r=loss_r,
        critic_loss_c=loss_c,
        actor_loss=actor_loss,
        alpha=agent.temp.alpha,
        beta=agent.lag.beta if agent.algo == "sac_lag" else math.nan,
    )
    return metrics


def agent_to_json(agent: Agent, step: int = 0) -> str:
    """Checkpoint: every network in the weight format plus the scalars."""
    doc = {
        "algo": agent.algo,
        "networks": {
            "policy": json.loads(net_to_json(agent.policy.trunk)),
            "qr1": json.loads(net_to_json(agent.reward_q.q1)),
            "qr2": json.loads(net_to_json(agent.reward_q.q2)),
            "qc1": json.loads(net_to_json(agent.cost_q.q1)),
            "qc2": json.loads(net_to_json(agent.cost_q.q2)),
            "qr1_target": json.loads(net_to_json(agent.reward_q_target.q1)),
            "qr2_target": json.loads(net_to_json(agent.reward_q_target.q2)),
            "qc1_target": json.loads(net_to_json(agent.cost_q_target.q1)),
            "qc2_target": json.loads(net_to_json(agent.cost_q_target.q2)),
        },
        "scalars": {
            "log_alpha": agent.temp.log_alpha,
            "beta": agent.lag.beta,
            "mu": agent.barrier.mu,
            "d": agent.barrier.cost_limit,
            "step": step,
        },
        "act_dim": agent.policy.act_dim,
    }
    return json.dumps(doc)


def agent_from_json(text: str) -> tuple[Agent, int]:
    doc = json.loads(text)
    nets = {k: net_from_json(json.dumps(v)) for k, v in doc["networks"].items()}
    act_dim = int(doc["act_dim"])
    scal = doc["scalars"]
    policy = GaussianPolicy(nets["policy"], act_dim)
    agent = Agent(
        doc["algo"],
        policy,
        DoubleQ(nets["qr1"], nets["qr2"]),
        DoubleQ(nets["qc1"], nets["qc2"]),
        EntropyTemperature(log_alpha=scal["log_alpha"], target_entropy=-float(act_dim)),
        BarrierConfig(mu=scal["mu"], cost_limit=scal["d"]),
        SacLagState(beta=scal["beta"]),
        RsConfig(),
    )
    agent.reward_q_target = DoubleQ(nets["qr1_target"], nets["qr2_target"])
    agent.cost_q_target = DoubleQ(nets["qc1_target"], nets["qc2_target"])
    return agent, int(scal["step"])
