"""Multi-objective PPO: preference-conditioned (AVUS) and min-norm (LFUS)
update strategies, plus fixed-weight single-objective baselines.

Both strategies share the rollout machinery: n-step vector advantages, three
surrogate forms (plain ratio, clipped, KL-penalized) with the largest one
selected per update, a mean-squared critic loss and an entropy bonus.  AVUS
conditions actor and critic on a per-episode preference drawn from the
simplex and mixes the summed and preference-weighted selected surrogates with
a scheduled homotopy coefficient.  LFUS trains one unconditioned policy and
recombines the two objectives' full-parameter gradients with the closed-form
min-norm weight at every update.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .env import Scenario, SimEnv
from .nn import AdamState, CategoricalHead, Mlp, adam_step

log = logging.getLogger(__name__)

SURROGATE_TAGS = ("NCP", "CLIP", "KL")

__all__ = [
    "TrainConfig",
    "Strategy",
    "ArchiveEntry",
    "CurvePoint",
    "RunResult",
    "sample_preference",
    "nstep_returns",
    "advantage",
    "ratio",
    "surrogate_ncp",
    "surrogate_clip",
    "surrogate_kl",
    "select_optimal_loss",
    "grad_normalize",
    "min_norm_nu",
    "dominates",
    "pareto_front",
    "train_run",
    "train",
]


# ---------------------------------------------------------------------------
# configuration and result records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 10000
    steps_per_episode: int = 5000
    update_horizon: int = 10       # transitions per update window
    epochs: int = 10               # optimization passes per update
    minibatch: int = 10
    clip_eps: float = 0.2
    gamma: float = 0.99
    actor_lr: float = 0.0001
    critic_lr: float = 0.003
    kl_coeff: float = 0.01         # KL penalty weight
    homotopy_init: float = 0.1
    homotopy_step: float = 0.001
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    hidden: int = 64
    eval_preferences: int = 5      # archive sweep size for AVUS

    def __post_init__(self):
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip epsilon must lie in (0, 1)")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        if not (0.0 <= self.homotopy_init <= 1.0):
            raise ValueError("homotopy coefficient must lie in [0, 1]")


@dataclass(frozen=True)
class Strategy:
    """Which update rule trains the run; fixed-weight runs scalarize rewards."""

    kind: str                                   # "avus" | "lfus" | "fixed"
    fixed_weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("avus", "lfus", "fixed"):
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "fixed":
            if abs(sum(self.fixed_weights) - 1.0) > 1e-9:
                raise ValueError("fixed weights must sum to one")

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.fixed_weights[0]:g},{self.fixed_weights[1]:g})"
        return self.kind


@dataclass(frozen=True)
class ArchiveEntry:
    coverage: float
    capacity: float
    strategy: str
    seed: int
    preference: tuple[float, float] | None
    config_hash: str

    @property
    def point(self) -> np.ndarray:
        return np.array([self.coverage, self.capacity])


@dataclass(frozen=True)
class CurvePoint:
    episode: int
    strategy: str
    seed: int
    cum_coverage: float
    cum_capacity: float
    scalarized_reward: float


@dataclass
class RunResult:
    strategy: str
    seed: int
    curves: list[CurvePoint]
    archive: list[ArchiveEntry]
    final_coverage: float
    final_capacity: float
    actor: Mlp
    critic: Mlp
    actor_adam: AdamState
    critic_adam: AdamState


# ---------------------------------------------------------------------------
# elementary operations
# ---------------------------------------------------------------------------

def sample_preference(rng: np.random.Generator) -> np.ndarray:
    """Uniform draw from the 2-simplex (Dirichlet with unit concentration)."""
    return rng.dirichlet((1.0, 1.0))


def nstep_returns(rewards: np.ndarray, bootstrap: np.ndarray,
                  gamma: float) -> np.ndarray:
    """Discounted reward tails with a bootstrapped terminal value, (T, n_obj)."""
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    out = np.empty_like(rewards)
    tail = np.asarray(bootstrap, dtype=float)
    for t in range(len(rewards) - 1, -1, -1):
        tail = rewards[t] + gamma * tail
        out[t] = tail
    return out


def advantage(rewards: np.ndarray, values: np.ndarray, bootstrap: np.ndarray,
              gamma: float) -> np.ndarray:
    """Per-step n-step advantages, one column per objective."""
    return nstep_returns(rewards, bootstrap, gamma) - np.atleast_2d(values)


def ratio(new_log_prob, old_log_prob):
    """Policy probability ratio with the exponent clamped to +-50."""
    return np.exp(np.clip(np.asarray(new_log_prob) - np.asarray(old_log_prob),
                          -50.0, 50.0))


def surrogate_ncp(ratios: np.ndarray, advantages: np.ndarray) -> float:
    """Unconstrained surrogate mean(ratio * advantage) (maximized)."""
    return float(np.mean(ratios * advantages))


def surrogate_clip(ratios: np.ndarray, advantages: np.ndarray,
                   clip_eps: float) -> float:
    """Pessimistic clipped surrogate; never exceeds the unconstrained form."""
    if not (0.0 < clip_eps < 1.0):
        raise ValueError("clip epsilon must lie in (0, 1)")
    clipped = np.clip(ratios, 1.0 - clip_eps, 1.0 + clip_eps)
    return float(np.mean(np.minimum(ratios * advantages, clipped * advantages)))


def surrogate_kl(ratios: np.ndarray, advantages: np.ndarray, kl_coeff: float,
                 kl_values: np.ndarray) -> float:
    """Ratio surrogate with a KL(new || old) penalty subtracted."""
    return float(np.mean(ratios * advantages - kl_coeff * np.asarray(kl_values)))


def select_optimal_loss(l_ncp: float, l_clip: float,
                        l_kl: float) -> tuple[float, str]:
    """Largest surrogate wins; ties go to the later of (NCP, CLIP, KL)."""
    values = (l_ncp, l_clip, l_kl)
    best = max(values)
    for i in range(2, -1, -1):
        if values[i] == best:
            return best, SURROGATE_TAGS[i]
    raise AssertionError("unreachable")


def grad_normalize(grads: list[np.ndarray],
                   initial_losses: list[float]) -> list[np.ndarray]:
    """Scale each objective's gradient by its loss at the initial parameters."""
    out = []
    for g, l0 in zip(grads, initial_losses):
        if abs(l0) < 1e-12:
            log.warning("initial loss ~0; skipping gradient normalization")
            out.append(g)
        else:
            out.append(g / l0)
    return out


def min_norm_nu(g1: np.ndarray, g2: np.ndarray) -> float:
    """Closed-form weight of the minimum-norm point in the hull of two
    gradients: nu g1 + (1 - nu) g2 has the smallest norm, nu in [0, 1]."""
    g1 = np.asarray(g1, dtype=float).ravel()
    g2 = np.asarray(g2, dtype=float).ravel()
    if g1.shape != g2.shape:
        raise ValueError("gradients must have equal length")
    diff = g1 - g2
    denom = float(diff @ diff)
    if denom <= 1e-300:
        return 0.5
    nu = float((g2 - g1) @ g2) / denom
    return min(1.0, max(0.0, nu))


def dominates(p, q) -> bool:
    """Maximization dominance: p >= q elementwise with one strict coordinate."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return bool(np.all(p >= q) and np.any(p > q))


def pareto_front(points) -> list:
    """Order-preserving subset of mutually non-dominated points."""
    pts = [np.asarray(getattr(p, "point", p), dtype=float) for p in points]
    keep = []
    for i, p in enumerate(pts):
        if not any(dominates(q, p) for j, q in enumerate(pts) if j != i):
            keep.append(i)
    items = list(points)
    return [items[i] for i in keep]


# ---------------------------------------------------------------------------
# PPO update core
# ---------------------------------------------------------------------------

class _Batch:
    """One update window of transitions."""

    __slots__ = ("obs", "logits", "actions", "log_probs", "rewards", "values")

    def __init__(self):
        self.obs, self.logits, self.actions = [], [], []
        self.log_probs, self.rewards, self.values = [], [], []

    def __len__(self):
        return len(self.obs)

    def arrays(self):
        return (np.asarray(self.obs), np.asarray(self.logits),
                np.asarray(self.actions), np.asarray(self.log_probs),
                np.asarray(self.rewards), np.asarray(self.values))


def _surrogate_terms(head: CategoricalHead, logits, old_logits, actions,
                     old_log_probs, advantages, config: TrainConfig):
    """Selected surrogate value and its logit gradient for every objective.

    Returns (selected values, tags, gradients (n_obj, B, L), entropy grad).
    Gradients are of the maximized surrogate means (per-sample rows already
    divided by the batch size).
    """
    batch = logits.shape[0]
    new_log_probs = head.log_prob(logits, actions)
    ratios = ratio(new_log_probs, old_log_probs)
    d_logp = head.log_prob_grad(logits, actions)
    kl_values = head.kl(logits, old_logits)
    d_kl = head.kl_grad(logits, old_logits)
    clipped = np.clip(ratios, 1.0 - config.clip_eps, 1.0 + config.clip_eps)
    inside = (ratios > 1.0 - config.clip_eps) & (ratios < 1.0 + config.clip_eps)

    selected, tags, grads = [], [], []
    for m in range(advantages.shape[1]):
        adv = advantages[:, m]
        l_ncp = surrogate_ncp(ratios, adv)
        l_clip = surrogate_clip(ratios, adv, config.clip_eps)
        l_kl = surrogate_kl(ratios, adv, config.kl_coeff, kl_values)
        value, tag = select_optimal_loss(l_ncp, l_clip, l_kl)
        d_ncp = (ratios * adv)[:, None] * d_logp / batch
        if tag == "NCP":
            grad = d_ncp
        elif tag == "CLIP":
            unclipped_wins = ratios * adv <= clipped * adv
            factor = ratios * adv * (unclipped_wins | inside)
            grad = factor[:, None] * d_logp / batch
        else:
            grad = d_ncp - config.kl_coeff * d_kl / batch
        selected.append(value)
        tags.append(tag)
        grads.append(grad)
    d_ent = head.entropy_grad(logits) / batch
    return np.array(selected), tags, grads, d_ent


def _critic_terms(values, targets, config: TrainConfig):
    """Per-objective MSE values and d(loss)/d(values)."""
    batch = values.shape[0]
    err = values - targets
    mse = (err ** 2).mean(axis=0)
    d_values = config.value_coeff * 2.0 * err / batch
    return mse, d_values


def _check_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise RuntimeError(f"non-finite {name} encountered; diagnostic: "
                           f"{np.asarray(value).ravel()[:8]}")


class _Updater:
    """Owns the networks and applies one of the update strategies."""

    def __init__(self, strategy: Strategy, obs_dim: int, head: CategoricalHead,
                 config: TrainConfig, rng: np.random.Generator):
        self.strategy = strategy
        self.config = config
        self.head = head
        self.n_obj = 1 if strategy.kind == "fixed" else 2
        in_dim = obs_dim + (2 if strategy.kind == "avus" else 0)
        self.actor = Mlp(in_dim, config.hidden, head.n_logits, rng)
        self.critic = Mlp(in_dim, config.hidden, self.n_obj, rng)
        self.actor_adam = AdamState(lr=config.actor_lr)
        self.critic_adam = AdamState(lr=config.critic_lr)
        self.initial_losses: list[float] | None = None
        self.homotopy = config.homotopy_init

    def advance_homotopy(self) -> None:
        self.homotopy = min(1.0, self.homotopy + self.config.homotopy_step)

    def update(self, batch: _Batch, bootstrap: np.ndarray,
               preference: np.ndarray | None) -> None:
        obs, old_logits, actions, old_logp, rewards, values = batch.arrays()
        returns = nstep_returns(rewards, bootstrap, self.config.gamma)
        advantages = returns - values
        _check_finite("advantages", advantages)
        order = np.arange(len(batch))
        for _ in range(self.config.epochs):
            for lo in range(0, len(order), self.config.minibatch):
                idx = order[lo:lo + self.config.minibatch]
                self._update_minibatch(obs[idx], old_logits[idx], actions[idx],
                                       old_logp[idx], advantages[idx],
                                       returns[idx], preference)

    def _update_minibatch(self, obs, old_logits, actions, old_logp,
                          advantages, returns, preference):
        cfg = self.config
        logits, actor_cache = self.actor.forward_cached(obs)
        values, critic_cache = self.critic.forward_cached(obs)
        selected, _tags, sel_grads, d_ent = _surrogate_terms(
            self.head, logits, old_logits, actions, old_logp, advantages, cfg)
        _check_finite("surrogate", selected)
        mse, d_values = _critic_terms(values, returns, cfg)
        _check_finite("critic loss", mse)

        if self.strategy.kind == "lfus":
            self._min_norm_step(selected, sel_grads, mse, d_values, d_ent,
                                actor_cache, critic_cache)
            return

        if self.strategy.kind == "avus":
            coeff = self.homotopy + (1.0 - self.homotopy) * preference
        else:
            coeff = np.ones(1)
        d_logits = -sum(c * g for c, g in zip(coeff, sel_grads))
        d_logits -= cfg.entropy_coeff * d_ent
        actor_grads = self.actor.backward(actor_cache, d_logits)
        critic_grads = self.critic.backward(critic_cache, d_values)
        adam_step(self.actor.parameters(), actor_grads, self.actor_adam)
        adam_step(self.critic.parameters(), critic_grads, self.critic_adam)

    def _min_norm_step(self, selected, sel_grads, mse, d_values, d_ent,
                       actor_cache, critic_cache):
        """LFUS: combine the two objectives' full-parameter gradients with the
        min-norm weight computed on loss-normalized gradients."""
        cfg = self.config
        losses, flat_grads = [], []
        for m in range(2):
            losses.append(-selected[m] + cfg.value_coeff * mse[m])
            actor_g = self.actor.backward(actor_cache, -sel_grads[m])
            col = np.zeros_like(d_values)
            col[:, m] = d_values[:, m]
            critic_g = self.critic.backward(critic_cache, col)
            flat_grads.append(np.concatenate([
                self.actor.grads_to_flat(actor_g),
                self.critic.grads_to_flat(critic_g)]))
        if self.initial_losses is None:
            self.initial_losses = [float(l) for l in losses]
        normalized = grad_normalize(flat_grads, self.initial_losses)
        nu = min_norm_nu(normalized[0], normalized[1])
        combined = nu * normalized[0] + (1.0 - nu) * normalized[1]
        n_actor = self.actor.n_parameters
        actor_flat = combined[:n_actor]
        critic_flat = combined[n_actor:]
        entropy_grads = self.actor.backward(actor_cache, -cfg.entropy_coeff * d_ent)
        actor_grads = self.actor.flat_to_grads(
            actor_flat + self.actor.grads_to_flat(entropy_grads))
        adam_step(self.actor.parameters(), actor_grads, self.actor_adam)
        adam_step(self.critic.parameters(),
                  self.critic.flat_to_grads(critic_flat), self.critic_adam)


# ---------------------------------------------------------------------------
# training driver
# ---------------------------------------------------------------------------

def _config_hash(scenario: Scenario, config: TrainConfig) -> str:
    digest = hashlib.sha256()
    digest.update(scenario.to_json().encode())
    digest.update(repr(config).encode())
    return digest.hexdigest()[:12]


def _augment(obs: np.ndarray, preference: np.ndarray | None) -> np.ndarray:
    if preference is None:
        return obs
    return np.concatenate([obs, preference])


def _scalarizer(strategy: Strategy, preference: np.ndarray | None) -> np.ndarray:
    if strategy.kind == "avus" and preference is not None:
        return preference
    if strategy.kind == "fixed":
        return np.asarray(strategy.fixed_weights)
    return np.array([0.5, 0.5])


def _run_episode(env: SimEnv, updater: _Updater, strategy: Strategy,
                 config: TrainConfig, episode_seed: int,
                 preference: np.ndarray | None,
                 sample_rng: np.random.Generator, learn: bool):
    """One episode; returns (cum coverage, cum capacity, cum vector reward)."""
    env.reset(episode_seed)
    batch = _Batch()
    cov_sum = cap_sum = 0.0
    reward_sum = np.zeros(2)
    steps = config.steps_per_episode
    for t in range(steps):
        obs = _augment(env.observe(), preference)
        logits = updater.actor.forward(obs)
        if learn:
            action, log_prob = updater.head.sample(logits, sample_rng)
        else:
            action, log_prob = updater.head.greedy(logits), 0.0
        value = updater.critic.forward(obs)
        _, reward, metrics = env.step(action)
        cov_sum += metrics.coverage
        cap_sum += metrics.capacity
        reward_sum += reward
        if learn:
            batch.obs.append(obs)
            batch.logits.append(logits)
            batch.actions.append(action)
            batch.log_probs.append(log_prob)
            batch.rewards.append(reward if updater.n_obj == 2
                                 else [float(np.asarray(strategy.fixed_weights) @ reward)])
            batch.values.append(np.atleast_1d(value))
            if len(batch) >= config.update_horizon or t == steps - 1:
                bootstrap = updater.critic.forward(_augment(env.observe(), preference))
                updater.update(batch, np.atleast_1d(bootstrap), preference)
                batch = _Batch()
    return cov_sum, cap_sum, reward_sum


def train_run(env, strategy: Strategy, config: TrainConfig, seed: int,
              config_hash: str = "") -> RunResult:
    """Train one seed of one strategy on any env with the SimEnv interface
    (layout.block_sizes, observation_size, reset, observe, step)."""
    head = CategoricalHead(env.layout.block_sizes)
    root = np.random.SeedSequence([seed, 0x57A2CC0])
    init_ss, sample_ss, pref_ss, episode_ss, eval_ss = root.spawn(5)
    updater = _Updater(strategy, env.observation_size, head, config,
                       np.random.default_rng(init_ss))
    sample_rng = np.random.default_rng(sample_ss)
    pref_rng = np.random.default_rng(pref_ss)
    episode_rng = np.random.default_rng(episode_ss)
    eval_seeds = np.random.default_rng(eval_ss).integers(2 ** 62, size=16)

    curves: list[CurvePoint] = []
    for episode in range(config.episodes):
        preference = sample_preference(pref_rng) if strategy.kind == "avus" else None
        episode_seed = int(episode_rng.integers(2 ** 62))
        cov_sum, cap_sum, reward_sum = _run_episode(
            env, updater, strategy, config, episode_seed, preference,
            sample_rng, learn=True)
        weights = _scalarizer(strategy, preference)
        curves.append(CurvePoint(
            episode=episode, strategy=strategy.label, seed=seed,
            cum_coverage=cov_sum, cum_capacity=cap_sum,
            scalarized_reward=float(weights @ reward_sum)))
        if strategy.kind == "avus":
            updater.advance_homotopy()

    archive, final_cov, final_cap = _populate_archive(
        env, updater, strategy, config, seed, eval_seeds, config_hash)
    return RunResult(strategy=strategy.label, seed=seed, curves=curves,
                     archive=archive, final_coverage=final_cov,
                     final_capacity=final_cap, actor=updater.actor,
                     critic=updater.critic, actor_adam=updater.actor_adam,
                     critic_adam=updater.critic_adam)


def _populate_archive(env, updater, strategy, config, seed, eval_seeds,
                      config_hash):
    """Greedy evaluation episodes -> candidate outcome points -> front."""
    steps = config.steps_per_episode
    if strategy.kind == "avus":
        sweep = np.linspace(0.0, 1.0, config.eval_preferences)
        preferences = [np.array([w, 1.0 - w]) for w in sweep]
    else:
        preferences = [None]
    candidates = []
    final_cov = final_cap = 0.0
    for j, pref in enumerate(preferences):
        cov_sum, cap_sum, _ = _run_episode(
            env, updater, strategy, config, int(eval_seeds[j % len(eval_seeds)]),
            pref, np.random.default_rng(0), learn=False)
        cov, cap = cov_sum / steps, cap_sum / steps
        pref_tuple = tuple(float(x) for x in pref) if pref is not None else None
        candidates.append(ArchiveEntry(
            coverage=cov, capacity=cap, strategy=strategy.label, seed=seed,
            preference=pref_tuple, config_hash=config_hash))
        final_cov, final_cap = final_cov + cov, final_cap + cap
    final_cov /= len(preferences)
    final_cap /= len(preferences)
    return pareto_front(candidates), final_cov, final_cap


def train(scenario: Scenario, strategy: Strategy, config: TrainConfig,
          seeds) -> tuple[list[ArchiveEntry], list[CurvePoint], list[RunResult]]:
    """Train every seed on the scenario; returns the merged non-dominated
    archive, all curve points and the per-seed run results."""
    chash = _config_hash(scenario, config)
    results = [train_run(SimEnv(scenario), strategy, config, int(s), chash)
               for s in seeds]
    merged: list[ArchiveEntry] = []
    curves: list[CurvePoint] = []
    for res in results:
        merged.extend(res.archive)
        curves.extend(res.curves)
    return pareto_front(merged), curves, results
