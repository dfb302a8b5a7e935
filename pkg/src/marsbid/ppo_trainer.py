"""On-policy PPO: rollout collection, generalized advantage estimation,
clipped-surrogate updates with value and entropy terms, and an Adam
optimizer with global gradient-norm clipping.

Rollouts may fan out over N independent environment instances (stepped
round-robin in-process); the update phase is single-writer. A run with one
worker and a fixed seed is exactly reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError
from .policy_net import PolicyNetwork, gaussian_log_prob, squash_correction


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs_per_update: int = 10
    minibatch_size: int = 64
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    total_steps: int = 200_000
    buffer_size: int = 2048
    kl_target: float = 0.02
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.buffer_size < 1 or self.minibatch_size < 1:
            raise ValueError("buffer and minibatch sizes must be >= 1")


def compute_gae(rewards, values, dones, bootstrap_value, gamma: float, lam: float):
    """Generalized advantage estimation over one trajectory axis.

    Accepts (T,) or (T, N) arrays; ``bootstrap_value`` is the critic's value
    of the observation after the last step (scalar or (N,)). Returns
    ``(advantages, returns)`` with returns = advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValueError(
            f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
            f"dones {dones.shape}"
        )
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_value = np.broadcast_to(
        np.asarray(bootstrap_value, dtype=np.float64), rewards.shape[1:]
    ).copy() if rewards.ndim > 1 else float(bootstrap_value)
    gae = np.zeros(rewards.shape[1:]) if rewards.ndim > 1 else 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std per update batch (mean-centered only when the
    batch is constant)."""
    adv = np.asarray(advantages, dtype=np.float64)
    centered = adv - adv.mean()
    std = adv.std()
    return centered / std if std > 0 else centered


def ppo_loss(log_prob_new, log_prob_old, advantages_normalized, clip_epsilon: float) -> float:
    """Clipped-surrogate loss: negative mean of min(ratio * A, clipped
    ratio * A)."""
    ratio = np.exp(np.asarray(log_prob_new) - np.asarray(log_prob_old))
    adv = np.asarray(advantages_normalized)
    surr = np.minimum(ratio * adv, np.clip(ratio, 1 - clip_epsilon, 1 + clip_epsilon) * adv)
    return float(-surr.mean())


class Adam:
    """Adaptive moment estimation over a dict of named parameter arrays."""

    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g**2
            update = self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            self.params[k] -= update


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most
    ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class UpdateRecord:
    update: int
    steps: int
    mean_reward: float
    mean_profit: float
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    def append(self, rec: UpdateRecord) -> None:
        self.records.append(rec)

    def to_csv(self, path, header_comment: str | None = None) -> None:
        cols = [
            "update",
            "steps",
            "mean_reward",
            "mean_profit",
            "policy_loss",
            "value_loss",
            "entropy",
            "approx_kl",
        ]
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(cols)
            for r in self.records:
                writer.writerow(
                    [
                        r.update,
                        r.steps,
                        repr(r.mean_reward),
                        repr(r.mean_profit),
                        repr(r.policy_loss),
                        repr(r.value_loss),
                        repr(r.entropy),
                        repr(r.approx_kl),
                    ]
                )


def build_loss_graph(
    policy: PolicyNetwork,
    pnodes: dict,
    obs: np.ndarray,
    actions_pre: np.ndarray,
    log_prob_old: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    cfg: PpoConfig,
):
    """Total PPO loss as an autodiff graph plus its scalar pieces."""
    mean, value = policy.forward_graph(pnodes, obs)
    logp_new = policy.log_prob_graph(pnodes, mean, actions_pre)
    ratio = ad.exp(logp_new - ad.Node(log_prob_old))
    adv = ad.Node(advantages)
    surr1 = ratio * adv
    surr2 = ad.clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * adv
    policy_loss = -ad.nmean(ad.minimum(surr1, surr2))
    value_loss = ad.nmean(ad.square(value - ad.Node(returns.reshape(-1, 1))))
    entropy = policy.entropy_graph(pnodes)
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    return total, policy_loss, value_loss, entropy, ratio


def train(
    env_factory,
    policy: PolicyNetwork,
    reward_fn,
    cfg: PpoConfig,
    seed: int = 0,
    workers: int = 1,
    checkpoint_cb=None,
) -> TrainingLog:
    """Run PPO until ``cfg.total_steps`` environment steps.

    ``env_factory`` builds a fresh environment per rollout worker;
    ``reward_fn(profit, alpha)`` shapes the raw settlement profit into the
    training reward. The policy is updated in place. Raises
    :class:`DivergenceError` if losses or parameters go non-finite.
    """
    if policy.frozen:
        raise ValueError("cannot train a frozen policy")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    ss = np.random.SeedSequence(seed)
    env_seeds, sample_seed, shuffle_seed = ss.spawn(3)
    env_rngs = [np.random.default_rng(s) for s in env_seeds.spawn(workers)]
    sample_rng = np.random.default_rng(sample_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    envs = [env_factory() for _ in range(workers)]
    obs = [envs[i].reset(rng=env_rngs[i]).vector for i in range(workers)]

    T = max(1, cfg.buffer_size // workers)
    A = policy.action_dim
    obs_dim = policy.layer_dims[0]
    optimizer = Adam(policy.params, lr=cfg.learning_rate)
    log = TrainingLog()

    steps_done = 0
    update = 0
    while steps_done < cfg.total_steps:
        buf_obs = np.empty((T, workers, obs_dim))
        buf_pre = np.empty((T, workers, A))
        buf_logp = np.empty((T, workers))
        buf_rew = np.empty((T, workers))
        buf_raw = np.empty((T, workers))
        buf_val = np.empty((T, workers))
        buf_done = np.zeros((T, workers))

        for t in range(T):
            for i in range(workers):
                x = obs[i]
                mean, log_std, value = policy.forward(x)
                z = sample_rng.standard_normal(A)
                u = mean + np.exp(log_std) * z
                a_env = np.tanh(u) if policy.squash else u
                logp = float(gaussian_log_prob(u, mean, log_std))
                if policy.squash:
                    logp -= float(squash_correction(a_env))

                out = envs[i].step(a_env if A > 1 else float(a_env[0]))
                shaped = float(reward_fn(out.reward_raw, out.alpha))

                buf_obs[t, i] = x
                buf_pre[t, i] = u
                buf_logp[t, i] = logp
                buf_rew[t, i] = shaped
                buf_raw[t, i] = out.reward_raw
                buf_val[t, i] = value
                buf_done[t, i] = 1.0 if out.done else 0.0
                if out.done:
                    obs[i] = envs[i].reset(rng=env_rngs[i]).vector
                else:
                    obs[i] = out.observation_next.vector

        bootstrap = np.array([policy.value(obs[i]) for i in range(workers)])
        advantages, returns = compute_gae(
            buf_rew, buf_val, buf_done, bootstrap, cfg.gamma, cfg.gae_lambda
        )

        flat_obs = buf_obs.reshape(-1, obs_dim)
        flat_pre = buf_pre.reshape(-1, A)
        flat_logp = buf_logp.reshape(-1)
        flat_adv = normalize_advantages(advantages.reshape(-1))
        flat_ret = returns.reshape(-1)
        n = flat_obs.shape[0]

        pl_sum = vl_sum = ent_last = kl_mean = 0.0
        n_batches = 0
        for _ in range(cfg.epochs_per_update):
            perm = shuffle_rng.permutation(n)
            kl_epoch = []
            for start in range(0, n, cfg.minibatch_size):
                idx = perm[start : start + cfg.minibatch_size]
                pnodes = policy.wrap_params()
                total, p_loss, v_loss, entropy, ratio = build_loss_graph(
                    policy,
                    pnodes,
                    flat_obs[idx],
                    flat_pre[idx],
                    flat_logp[idx],
                    flat_adv[idx],
                    flat_ret[idx],
                    cfg,
                )
                if not np.isfinite(total.value):
                    raise DivergenceError(f"non-finite loss at update {update}")
                ad.backward(total)
                grads = {k: ad.grad_of(pnodes[k]) for k in pnodes}
                clip_grad_norm(grads, cfg.max_grad_norm)
                optimizer.step(grads)
                policy.clamp_log_std()

                r = ratio.value
                kl_epoch.append(float(np.mean(r - 1.0 - np.log(r))))
                pl_sum += float(p_loss.value)
                vl_sum += float(v_loss.value)
                ent_last = float(entropy.value)
                n_batches += 1
            kl_mean = float(np.mean(kl_epoch))
            if kl_mean > cfg.kl_target:
                break

        for name in policy.param_names():
            if not np.all(np.isfinite(policy.params[name])):
                raise DivergenceError(f"non-finite parameter {name} at update {update}")

        steps_done += T * workers
        update += 1
        policy.step_count = steps_done
        log.append(
            UpdateRecord(
                update=update,
                steps=steps_done,
                mean_reward=float(buf_rew.mean()),
                mean_profit=float(buf_raw.mean()),
                policy_loss=pl_sum / max(1, n_batches),
                value_loss=vl_sum / max(1, n_batches),
                entropy=ent_last,
                approx_kl=kl_mean,
            )
        )
        if checkpoint_cb is not None:
            checkpoint_cb(policy, update)
    return log
