"""Small tabular MOMDP used to validate the multi-objective operators.

The operators work on preference-indexed action-value tables
Q[w, s, a, m] (preference index, state, action, objective).  The optimality
filter takes, for each (state, preference), the scalarized maximum over
actions and over every other preference's table, realizing the convex
envelope of the attainable value front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TabularMoMdp",
    "TabularEnvAdapter",
    "two_resource_chain",
    "value_iteration",
    "optimality_filter",
    "mo_optimality_operator",
    "mo_evaluation_operator",
    "value_metric",
    "scalar_policy_return",
    "greedy_policy",
]


@dataclass(frozen=True)
class TabularMoMdp:
    """transitions: (S, A, S) row-stochastic; rewards: (S, A, n_obj)."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    start_state: int = 0

    def __post_init__(self):
        s, a, s2 = self.transitions.shape
        if s != s2:
            raise ValueError("transition tensor must be (S, A, S)")
        if self.rewards.shape[:2] != (s, a):
            raise ValueError("reward tensor must be (S, A, n_obj)")
        if not np.allclose(self.transitions.sum(axis=2), 1.0):
            raise ValueError("transitions must be row-stochastic")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_objectives(self) -> int:
        return self.rewards.shape[2]


def two_resource_chain(n_positions: int = 5, travel_reward: float = 0.02,
                       gamma: float = 0.9) -> TabularMoMdp:
    """Line MDP with one resource at each end.

    States are positions 0..n-1; actions are move-left, move-right and
    collect.  Collecting at position 0 yields (1, 0), at the far end (0, 1),
    elsewhere a small symmetric trickle.  The preferred end, and therefore the
    optimal policy, depends on the preference between the two objectives.
    """
    n, a = n_positions, 3
    transitions = np.zeros((n, a, n))
    rewards = np.zeros((n, a, 2))
    for s in range(n):
        transitions[s, 0, max(s - 1, 0)] = 1.0
        transitions[s, 1, min(s + 1, n - 1)] = 1.0
        transitions[s, 2, s] = 1.0
        rewards[s, 0] = rewards[s, 1] = (travel_reward, travel_reward)
        if s == 0:
            rewards[s, 2] = (1.0, 0.0)
        elif s == n - 1:
            rewards[s, 2] = (0.0, 1.0)
        else:
            rewards[s, 2] = (0.1, 0.1)
    return TabularMoMdp(transitions, rewards, gamma, start_state=n // 2)


def value_iteration(mdp: TabularMoMdp, weights: np.ndarray, tol: float = 1e-12,
                    max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal scalarized values and a greedy policy for fixed weights."""
    scalar_r = mdp.rewards @ np.asarray(weights)
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = scalar_r + mdp.gamma * mdp.transitions @ v
        v_new = q.max(axis=1)
        if np.max(np.abs(v_new - v)) < tol:
            v = v_new
            break
        v = v_new
    q = scalar_r + mdp.gamma * mdp.transitions @ v
    return v, q.argmax(axis=1)


def optimality_filter(q_table: np.ndarray, preferences: np.ndarray) -> np.ndarray:
    """(HQ)(s, w) = max over actions and preference tables of w^T Q(s, a, w').

    q_table: (W, S, A, n_obj); preferences: (W, n_obj).  Returns (W, S).
    """
    preferences = np.asarray(preferences)
    if preferences.ndim != 2 or preferences.shape[0] == 0:
        raise ValueError("preference set must be a non-empty (W, n_obj) array")
    # scalarize every table under every preference: (W_pref, W_table, S, A)
    scal = np.einsum("wm,vsam->wvsa", preferences, q_table)
    return scal.max(axis=(1, 3))


def _filter_argmax(q_table: np.ndarray, preferences: np.ndarray):
    """Arg (table, action) achieving the optimality filter, per (w, s)."""
    w_n, s_n, a_n, _ = q_table.shape
    scal = np.einsum("wm,vsam->wsva", preferences, q_table)
    flat = scal.reshape(preferences.shape[0], s_n, w_n * a_n)
    best = flat.argmax(axis=2)
    return best // a_n, best % a_n


def mo_optimality_operator(q_table: np.ndarray, mdp: TabularMoMdp,
                           preferences: np.ndarray) -> np.ndarray:
    """One application of the vector optimality update.

    (JQ)(s, a, w) = R(s, a) + gamma * sum_s' p(s'|s, a) Q(s', a*, w*) where
    (a*, w*) attain the optimality filter at (s', w).
    """
    w_n, s_n, a_n, n_obj = q_table.shape
    table_star, action_star = _filter_argmax(q_table, preferences)
    # best attainable vector value per (w, s'): (W, S, n_obj)
    rows = np.arange(s_n)[None, :]
    best_vec = q_table[table_star, rows, action_star]
    out = np.empty_like(q_table)
    for w in range(w_n):
        out[w] = mdp.rewards + mdp.gamma * np.einsum(
            "sap,pm->sam", mdp.transitions, best_vec[w])
    return out


def mo_evaluation_operator(q_table: np.ndarray, policy: np.ndarray,
                           mdp: TabularMoMdp,
                           preferences: np.ndarray) -> np.ndarray:
    """Policy-evaluation update: expectation over the policy at s' instead of
    the optimality filter.  policy: (S, A) row-stochastic."""
    w_n = q_table.shape[0]
    out = np.empty_like(q_table)
    for w in range(w_n):
        v_next = np.einsum("pa,pam->pm", policy, q_table[w])
        out[w] = mdp.rewards + mdp.gamma * np.einsum(
            "sap,pm->sam", mdp.transitions, v_next)
    return out


def value_metric(q_a: np.ndarray, q_b: np.ndarray,
                 preferences: np.ndarray) -> float:
    """Sup-distance max |w^T (Q - Q')| over states, actions and preferences."""
    diff = np.einsum("wm,wsam->wsa", np.asarray(preferences), q_a - q_b)
    return float(np.abs(diff).max())


def scalar_policy_return(mdp: TabularMoMdp, policy: np.ndarray,
                         weights: np.ndarray) -> float:
    """Exact discounted scalarized return of a (possibly stochastic) policy
    from the start state, via the linear Bellman solve."""
    policy = np.asarray(policy, dtype=float)
    if policy.ndim == 1:
        onehot = np.zeros((mdp.n_states, mdp.n_actions))
        onehot[np.arange(mdp.n_states), policy.astype(int)] = 1.0
        policy = onehot
    scalar_r = mdp.rewards @ np.asarray(weights)
    r_pi = (policy * scalar_r).sum(axis=1)
    p_pi = np.einsum("sa,sap->sp", policy, mdp.transitions)
    v = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, r_pi)
    return float(v[mdp.start_state])
