"""MS-protocol STAR-RIS state and the network metrics it induces.

Each panel's K elements are statically split into a reflection group
(indices [0, K_Re)) and a transmission group ([K_Re, K)).  Both groups share
one amplitude per mode; the per-surface energy identity
K_Re * beta_Re + K_Tr * beta_Tr = 1 holds at all times.  Metrics are computed
from noise-free link powers: RSRP is the max over candidate links, SINR
divides the serving link by all remaining links plus noise, and the two
objectives are weight-masses over covered points and weighted log-rates.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .geometry import LinkIndicators

ENERGY_TOL = 1e-9

__all__ = [
    "StarRisState",
    "ObjectiveWeights",
    "NetworkMetrics",
    "coefficient_matrix",
    "received_signal",
    "rsrp",
    "sinr",
    "coverage",
    "capacity",
    "metrics_from_powers",
    "dump_metrics_csv",
]


@dataclass
class StarRisState:
    """Mode split, per-mode amplitudes (beta = squared amplitude) and phases."""

    k_reflect: int
    k_transmit: int
    beta_reflect: float
    beta_transmit: float
    phases_reflect: np.ndarray   # (K_Re,), radians in [0, 2 pi)
    phases_transmit: np.ndarray  # (K_Tr,)

    @property
    def k_total(self) -> int:
        return self.k_reflect + self.k_transmit

    def validate(self) -> None:
        if self.k_reflect < 1 or self.k_transmit < 1:
            raise ValueError("both mode groups need at least one element")
        for beta in (self.beta_reflect, self.beta_transmit):
            if not (0.0 < beta <= 1.0):
                raise ValueError(f"beta {beta} outside (0, 1]")
        energy = self.k_reflect * self.beta_reflect + self.k_transmit * self.beta_transmit
        if abs(energy - 1.0) > ENERGY_TOL:
            raise ValueError(f"energy identity violated: {energy}")
        if len(self.phases_reflect) != self.k_reflect:
            raise ValueError("reflection phase vector length mismatch")
        if len(self.phases_transmit) != self.k_transmit:
            raise ValueError("transmission phase vector length mismatch")
        for ph in (self.phases_reflect, self.phases_transmit):
            if np.any(ph < 0.0) or np.any(ph >= 2.0 * math.pi):
                raise ValueError("phases must lie in [0, 2 pi)")

    def coefficients(self) -> np.ndarray:
        """Full-panel coefficient vector (K,), reflection block first."""
        return np.concatenate([
            math.sqrt(self.beta_reflect) * np.exp(1j * self.phases_reflect),
            math.sqrt(self.beta_transmit) * np.exp(1j * self.phases_transmit),
        ])


@dataclass(frozen=True)
class ObjectiveWeights:
    """Per-point coverage and capacity weights, each summing to one."""

    coverage: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        for w in (self.coverage, self.capacity):
            if np.any(w < 0):
                raise ValueError("weights must be non-negative")
            if abs(float(w.sum()) - 1.0) > ENERGY_TOL:
                raise ValueError("weights must sum to one")


@dataclass
class NetworkMetrics:
    rsrp: np.ndarray         # (N,) linear mW
    best_server: np.ndarray  # (N, 2) int, serving (bs, panel) pair
    sinr: np.ndarray         # (N,) linear ratio
    covered: np.ndarray      # (N,) bool
    coverage: float          # weight-mass of covered points, in [0, 1]
    capacity: float          # bits/s


def coefficient_matrix(state: StarRisState, mode: str) -> np.ndarray:
    """Diagonal coefficient matrix diag(sqrt(beta) exp(j phase)) of one mode."""
    if mode == "Re":
        beta, phases = state.beta_reflect, state.phases_reflect
    elif mode == "Tr":
        beta, phases = state.beta_transmit, state.phases_transmit
    else:
        raise ValueError("mode must be 'Re' or 'Tr'")
    return np.diag(math.sqrt(beta) * np.exp(1j * phases))


def received_signal(h_panel_point: np.ndarray, h_bs_panel: np.ndarray,
                    state: StarRisState, mode: str, h_direct: complex,
                    indicators: LinkIndicators, direct_gate: int,
                    symbol: complex) -> complex:
    """Noise-free received amplitude of one (BS, panel, point) link.

    h_panel_point / h_bs_panel are the mode-group channel vectors.  The direct
    term enters per the panel-size case: with the combined indicator 0 there
    is never a direct link; with the height indicator 1 there always is; in
    the tall-narrow case the per-link gate (the a-bar occlusion indicator)
    decides.  Noise is added by callers that need it.
    """
    if indicators.i_link != (indicators.i_height | indicators.i_width):
        raise ValueError("inconsistent indicator combination")
    phi = coefficient_matrix(state, mode)
    cascaded = np.conj(h_panel_point) @ phi @ h_bs_panel
    if indicators.i_link == 0:
        direct = 0.0
    elif indicators.i_height == 1:
        direct = h_direct
    else:
        direct = direct_gate * h_direct
    return (cascaded + direct) * symbol


def rsrp(link_powers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max noise-free link power per point and its (bs, panel) argmax pair.

    link_powers: (2, Ls, N) with Ls >= 1 candidate panels (or the single
    direct pseudo-panel when no surfaces exist).
    """
    n_bs, n_links, n_pts = link_powers.shape
    flat = link_powers.reshape(n_bs * n_links, n_pts)
    best = np.argmax(flat, axis=0)
    pairs = np.column_stack([best // n_links, best % n_links])
    return flat[best, np.arange(n_pts)], pairs


def sinr(link_powers: np.ndarray, serving: np.ndarray, noise_power: float) -> np.ndarray:
    """Serving power over the sum of every other link's power plus noise."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    n_bs, n_links, n_pts = link_powers.shape
    total = link_powers.sum(axis=(0, 1))
    idx = np.arange(n_pts)
    served = link_powers[serving[:, 0], serving[:, 1], idx]
    return served / (total - served + noise_power)


def coverage(rsrp_values: np.ndarray, weights: np.ndarray, threshold: float) -> float:
    """Weight-mass of points whose RSRP reaches the threshold."""
    return float(weights[rsrp_values >= threshold].sum())


def capacity(sinr_values: np.ndarray, weights: np.ndarray, bandwidth: float) -> float:
    """Weighted sum of B log2(1 + SINR) over all points, bits/s."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return float(np.sum(weights * bandwidth * np.log2(1.0 + sinr_values)))


def metrics_from_powers(link_powers: np.ndarray, weights: ObjectiveWeights,
                        noise_power: float, rsrp_threshold: float,
                        bandwidth: float) -> NetworkMetrics:
    """Full metric set from the noise-free link power tensor (2, Ls, N)."""
    best, pairs = rsrp(link_powers)
    ratios = sinr(link_powers, pairs, noise_power)
    covered = best >= rsrp_threshold
    return NetworkMetrics(
        rsrp=best,
        best_server=pairs,
        sinr=ratios,
        covered=covered,
        coverage=float(weights.coverage[covered].sum()),
        capacity=capacity(ratios, weights.capacity, bandwidth),
    )


def dump_metrics_csv(fh: io.TextIOBase, step: int, points: np.ndarray,
                     metrics: NetworkMetrics, header: bool = False) -> None:
    """Append one row per sample point: powers in dBW, ratios in dB."""
    if header:
        fh.write("t,i,x,y,rsrp_dbw,serving_a,serving_ns,sinr_db,covered\n")
    for i in range(points.shape[0]):
        rsrp_dbw = 10.0 * math.log10(metrics.rsrp[i]) - 30.0 if metrics.rsrp[i] > 0 \
            else -math.inf
        sinr_db = 10.0 * math.log10(metrics.sinr[i]) if metrics.sinr[i] > 0 else -math.inf
        fh.write(f"{step},{i},{points[i, 0]:.6g},{points[i, 1]:.6g},"
                 f"{rsrp_dbw:.6f},{metrics.best_server[i, 0]},"
                 f"{metrics.best_server[i, 1]},{sinr_db:.6f},"
                 f"{int(metrics.covered[i])}\n")
