"""Minimal neural substrate: tanh MLPs, categorical action heads and Adam.

One hidden layer of 64 tanh units (input/hidden/output) for both actor and
critic.  The actor output is partitioned into categorical blocks, one per
discrete action grid; the joint log-probability is the sum of block
log-probabilities.  Blocks are handled through a padded (n_blocks, max_size)
view so sampling and distribution derivatives stay vectorized.  Gradients are
exact reverse-mode and are verified against central finite differences in the
test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Mlp",
    "AdamState",
    "adam_step",
    "log_softmax",
    "softmax",
    "CategoricalHead",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class Mlp:
    """input -> tanh(hidden) -> linear output, parameters seeded uniform
    in +-1/sqrt(fan_in)."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int,
                 rng: np.random.Generator):
        self.sizes = (n_in, n_hidden, n_out)
        b1 = 1.0 / math.sqrt(n_in)
        b2 = 1.0 / math.sqrt(n_hidden)
        self.w1 = rng.uniform(-b1, b1, size=(n_in, n_hidden))
        self.b1 = rng.uniform(-b1, b1, size=n_hidden)
        self.w2 = rng.uniform(-b2, b2, size=(n_hidden, n_out))
        self.b2 = rng.uniform(-b2, b2, size=n_out)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward; x is (B, n_in) or (n_in,)."""
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        out = np.tanh(x @ self.w1 + self.b1) @ self.w2 + self.b2
        return out[0] if single else out

    def forward_cached(self, x: np.ndarray):
        """Forward keeping the activations needed by backward."""
        if x.ndim == 1:
            x = x[None, :]
        hidden = np.tanh(x @ self.w1 + self.b1)
        out = hidden @ self.w2 + self.b2
        return out, (x, hidden)

    def backward(self, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream gradient d_out (B, n_out)."""
        x, hidden = cache
        if d_out.ndim == 1:
            d_out = d_out[None, :]
        d_hidden = (d_out @ self.w2.T) * (1.0 - hidden ** 2)
        return {
            "w1": x.T @ d_hidden,
            "b1": d_hidden.sum(axis=0),
            "w2": hidden.T @ d_out,
            "b2": d_out.sum(axis=0),
        }

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters().values()])

    def grads_to_flat(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in ("w1", "b1", "w2", "b2")])

    def flat_to_grads(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, cursor = {}, 0
        for name, p in self.parameters().items():
            out[name] = flat[cursor:cursor + p.size].reshape(p.shape)
            cursor += p.size
        return out

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one parameter set."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update of every parameter array."""
    state.step_count += 1
    t = state.step_count
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def log_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted log-softmax, stable for very large logits."""
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(logits, axis=axis))


class CategoricalHead:
    """Partition of a logit vector into independent categorical blocks.

    Internally works on a zero-padded (n_blocks, max_size) view; padding
    positions carry probability zero and never influence samples, entropies
    or gradients.
    """

    def __init__(self, block_sizes):
        self.block_sizes = [int(s) for s in block_sizes]
        if any(s < 1 for s in self.block_sizes):
            raise ValueError("block sizes must be positive")
        self.n_blocks = len(self.block_sizes)
        self.offsets = np.concatenate([[0], np.cumsum(self.block_sizes)])
        self.n_logits = int(self.offsets[-1])
        self.max_size = max(self.block_sizes)
        cols = np.arange(self.max_size)
        sizes = np.asarray(self.block_sizes)
        self.pad_mask = cols[None, :] < sizes[:, None]          # (nb, ms)
        self.pad_index = np.minimum(self.offsets[:-1, None] + cols[None, :],
                                    self.n_logits - 1)
        self.flat_order = self.pad_index[self.pad_mask]          # valid -> flat

    # -- padded views ------------------------------------------------------
    def _pad(self, logits: np.ndarray) -> np.ndarray:
        padded = logits[..., self.pad_index]
        return np.where(self.pad_mask, padded, -np.inf)

    def _unpad(self, padded: np.ndarray, batch_shape) -> np.ndarray:
        flat = np.zeros(batch_shape + (self.n_logits,))
        flat[..., self.flat_order] = padded[..., self.pad_mask]
        return flat

    def _log_probs_padded(self, logits: np.ndarray) -> np.ndarray:
        padded = self._pad(logits)
        shifted = padded - padded.max(axis=-1, keepdims=True)
        with np.errstate(divide="ignore"):
            return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    # -- distribution interface ---------------------------------------------
    def sample(self, logits: np.ndarray, rng: np.random.Generator):
        """One index per block via Gumbel-max; returns (indices, joint log-prob)."""
        logp = self._log_probs_padded(logits)
        gumbel = rng.gumbel(size=logp.shape)
        indices = np.argmax(np.where(self.pad_mask, logp + gumbel, -np.inf), axis=-1)
        joint = float(logp[np.arange(self.n_blocks), indices].sum())
        return indices.astype(np.int64), joint

    def greedy(self, logits: np.ndarray) -> np.ndarray:
        padded = self._pad(logits)
        return np.argmax(padded, axis=-1).astype(np.int64)

    def log_prob(self, logits: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Joint log-probability of the indices; batched over leading axis."""
        single = logits.ndim == 1
        if single:
            logits, indices = logits[None], np.asarray(indices)[None]
        logp = self._log_probs_padded(logits)
        rows = np.arange(logits.shape[0])[:, None]
        total = logp[rows, np.arange(self.n_blocks)[None, :], indices].sum(axis=1)
        return float(total[0]) if single else total

    def probs(self, logits: np.ndarray) -> np.ndarray:
        """Block-normalized probabilities in the flat layout."""
        single = logits.ndim == 1
        if single:
            logits = logits[None]
        p = np.exp(self._log_probs_padded(logits))
        flat = self._unpad(p, logits.shape[:-1])
        return flat[0] if single else flat

    def entropy(self, logits: np.ndarray) -> np.ndarray:
        """Sum of block entropies; batched over the leading axis."""
        single = logits.ndim == 1
        if single:
            logits = logits[None]
        logp = self._log_probs_padded(logits)
        p = np.exp(logp)
        ent = -np.where(self.pad_mask, p * logp, 0.0).sum(axis=(-2, -1))
        return float(ent[0]) if single else ent

    # -- derivatives used by the PPO update ---------------------------------
    def log_prob_grad(self, logits: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """d joint-log-prob / d logits = onehot(a) - p per block, (B, n_logits)."""
        grad = -self.probs(logits)
        rows = np.arange(logits.shape[0])[:, None]
        chosen = self.offsets[:-1][None, :] + indices
        grad[rows, chosen] += 1.0
        return grad

    def kl(self, logits_new: np.ndarray, logits_old: np.ndarray) -> np.ndarray:
        """Per-sample KL(new || old) summed over blocks, (B,)."""
        lp_new = self._log_probs_padded(logits_new)
        lp_old = self._log_probs_padded(logits_old)
        p_new = np.exp(lp_new)
        terms = np.where(self.pad_mask, p_new * (lp_new - lp_old), 0.0)
        return terms.sum(axis=(-2, -1))

    def kl_grad(self, logits_new: np.ndarray, logits_old: np.ndarray) -> np.ndarray:
        """d KL(new || old) / d logits_new, (B, n_logits)."""
        lp_new = self._log_probs_padded(logits_new)
        lp_old = self._log_probs_padded(logits_old)
        p_new = np.exp(lp_new)
        delta = np.where(self.pad_mask, lp_new - lp_old, 0.0)
        block_kl = (p_new * delta).sum(axis=-1, keepdims=True)
        grad = p_new * (delta - block_kl)
        return self._unpad(grad, logits_new.shape[:-1])

    def entropy_grad(self, logits: np.ndarray) -> np.ndarray:
        """d (sum of block entropies) / d logits, (B, n_logits)."""
        logp = self._log_probs_padded(logits)
        p = np.exp(logp)
        block_ent = -np.where(self.pad_mask, p * logp, 0.0).sum(axis=-1, keepdims=True)
        grad = np.where(self.pad_mask, -p * (logp + block_ent), 0.0)
        return self._unpad(grad, logits.shape[:-1])


def save_checkpoint(path, actor: Mlp, critic: Mlp, actor_adam: AdamState,
                    critic_adam: AdamState, extra: dict | None = None) -> None:
    """Bit-exact dump of both networks and optimizer moments."""
    payload = {"version": np.array(CHECKPOINT_VERSION)}
    for tag, net, adam in (("actor", actor, actor_adam),
                           ("critic", critic, critic_adam)):
        payload[f"{tag}_sizes"] = np.array(net.sizes)
        for name, p in net.parameters().items():
            payload[f"{tag}_{name}"] = p
            payload[f"{tag}_m_{name}"] = adam.m.get(name, np.zeros_like(p))
            payload[f"{tag}_v_{name}"] = adam.v.get(name, np.zeros_like(p))
        payload[f"{tag}_adam"] = np.array(
            [adam.lr, adam.beta1, adam.beta2, adam.eps, adam.step_count])
    for key, value in (extra or {}).items():
        payload[f"extra_{key}"] = np.asarray(value)
    np.savez(path, **payload)


def load_checkpoint(path) -> dict:
    """Inverse of save_checkpoint; returns nets, Adam states and extras."""
    with np.load(path, allow_pickle=False) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise ValueError("unsupported checkpoint version")
        out = {}
        for tag in ("actor", "critic"):
            sizes = data[f"{tag}_sizes"]
            net = Mlp(int(sizes[0]), int(sizes[1]), int(sizes[2]),
                      np.random.default_rng(0))
            lr, b1, b2, eps, steps = data[f"{tag}_adam"]
            adam = AdamState(lr=float(lr), beta1=float(b1), beta2=float(b2),
                             eps=float(eps), step_count=int(steps))
            for name in ("w1", "b1", "w2", "b2"):
                setattr(net, name, data[f"{tag}_{name}"].copy())
                adam.m[name] = data[f"{tag}_m_{name}"].copy()
                adam.v[name] = data[f"{tag}_v_{name}"].copy()
            out[tag] = net
            out[f"{tag}_adam"] = adam
        out["extra"] = {k[len("extra_"):]: data[k] for k in data.files
                        if k.startswith("extra_")}
    return out
