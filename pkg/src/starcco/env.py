"""Multi-objective MDP over STAR-RIS configurations.

State: per-panel mode amplitudes and phase vectors plus the transmit power.
Action: one categorical index per discrete grid (amplitude split, per-element
phases, power); every step re-selects absolute grid values.  Reward: the
change of weighted coverage and weighted capacity between adjacent steps.
Poisson traffic weights and the NLOS channel draw are fixed per episode at
reset, which keeps reward differences attributable to actions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import _kernels
from .channel import ChannelParams, draw_realization
from .geometry import GridMap, RisPlacement, build_grid, panel_blocks_ray
from .starris import (NetworkMetrics, ObjectiveWeights, StarRisState,
                      metrics_from_powers)

__all__ = [
    "EnvParams",
    "Scenario",
    "MoState",
    "ActionLayout",
    "poisson_weights",
    "SimEnv",
]


@dataclass(frozen=True)
class EnvParams:
    """Discretization grids, radio limits and episode settings."""

    amplitude_step: float = 0.1       # z
    phase_levels: int = 8             # L equispaced levels in [0, 2 pi)
    max_power_mw: float = 200.0
    initial_power_mw: float = 2.1
    rsrp_threshold_mw: float = 0.23
    noise_mw: float = 9e-12
    coverage_events_mean: float = 5.0
    capacity_events_mean: float = 64.0
    steps_per_episode: int = 200
    bandwidth_hz: float = 10e6

    def __post_init__(self):
        if not (0.0 < self.amplitude_step < 0.5):
            raise ValueError("amplitude step must lie in (0, 0.5)")
        if self.phase_levels < 2:
            raise ValueError("need at least two phase levels")
        if self.max_power_mw <= 0 or self.initial_power_mw <= 0:
            raise ValueError("powers must be positive")
        if self.initial_power_mw > self.max_power_mw:
            raise ValueError("initial power exceeds the maximum")
        if self.noise_mw <= 0:
            raise ValueError("noise power must be positive")


@dataclass(frozen=True)
class Scenario:
    """Complete description of one experiment cell (geometry, radio, MDP)."""

    side_length: float
    grid_side: float
    bs_height: float
    surfaces: tuple[RisPlacement, ...]
    k_horizontal: int = 4
    k_vertical: int = 4
    k_reflect: int = 0          # 0 means half the panel (rounded down)
    channel: ChannelParams = field(default_factory=ChannelParams)
    env: EnvParams = field(default_factory=EnvParams)

    @property
    def k_total(self) -> int:
        return self.k_horizontal * self.k_vertical

    @property
    def k_reflect_eff(self) -> int:
        return self.k_reflect if self.k_reflect > 0 else self.k_total // 2

    def without_surfaces(self) -> "Scenario":
        return Scenario(self.side_length, self.grid_side, self.bs_height, (),
                        self.k_horizontal, self.k_vertical, self.k_reflect,
                        self.channel, self.env)

    def to_json(self) -> str:
        doc = {
            "geometry": {
                "side_length": self.side_length,
                "grid_side": self.grid_side,
                "bs_height": self.bs_height,
                "surfaces": [
                    {"x": p.x, "y": p.y, "h_ns": p.height, "w_ns": p.width}
                    for p in self.surfaces
                ],
            },
            "starris": {
                "k_horizontal": self.k_horizontal,
                "k_vertical": self.k_vertical,
                "k_reflect": self.k_reflect,
            },
            "channel": asdict(self.channel),
            "env": asdict(self.env),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Scenario":
        doc = json.loads(text)
        geo = doc["geometry"]
        surfaces = tuple(
            RisPlacement(s["x"], s["y"], s["h_ns"], s["w_ns"])
            for s in geo.get("surfaces", ())
        )
        star = doc.get("starris", {})
        return Scenario(
            side_length=geo["side_length"],
            grid_side=geo["grid_side"],
            bs_height=geo["bs_height"],
            surfaces=surfaces,
            k_horizontal=star.get("k_horizontal", 4),
            k_vertical=star.get("k_vertical", 4),
            k_reflect=star.get("k_reflect", 0),
            channel=ChannelParams(**doc.get("channel", {})),
            env=EnvParams(**doc.get("env", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @staticmethod
    def load(path) -> "Scenario":
        with open(path) as fh:
            return Scenario.from_json(fh.read())


@dataclass
class MoState:
    """Joint configuration: one StarRisState per panel plus transmit power (mW)."""

    surfaces: tuple[StarRisState, ...]
    power_mw: float

    def features(self, max_power_mw: float) -> np.ndarray:
        """Flat observation vector, every component scaled into [0, 1]."""
        parts = []
        for s in self.surfaces:
            parts.append([s.beta_reflect, s.beta_transmit])
            parts.append(s.phases_reflect / (2.0 * math.pi))
            parts.append(s.phases_transmit / (2.0 * math.pi))
        parts.append([self.power_mw / max_power_mw])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


class ActionLayout:
    """Categorical grid structure of the action space.

    Per panel (in order): reflection-split block, transmission-split block and
    one phase block per element (reflection group first).  One trailing power
    block is shared.  The split grids hold the energy shares {z, 2z, .., 1-z};
    per-mode amplitudes are derived from the selected transmission share so
    the panel energy identity holds for any element split.  The power grid is
    {0, z Pmax, .., Pmax}; a selected 0 is clamped to the smallest positive
    grid value to respect the open power bound.
    """

    def __init__(self, n_surfaces: int, k_total: int, params: EnvParams):
        steps = round(1.0 / params.amplitude_step)
        self.share_grid = np.arange(1, steps) * params.amplitude_step
        self.power_grid = np.arange(0, steps + 1) * params.amplitude_step \
            * params.max_power_mw
        self.phase_grid = np.arange(params.phase_levels) \
            * (2.0 * math.pi / params.phase_levels)
        self.n_surfaces = n_surfaces
        self.k_total = k_total
        sizes: list[int] = []
        for _ in range(n_surfaces):
            sizes.append(len(self.share_grid))   # reflection split (constraint-bound)
            sizes.append(len(self.share_grid))   # transmission split
            sizes.extend([len(self.phase_grid)] * k_total)
        sizes.append(len(self.power_grid))
        self.block_sizes = sizes
        self.n_blocks = len(sizes)

    def power_value(self, index: int) -> float:
        value = self.power_grid[index]
        return value if value > 0 else self.power_grid[1]

    def random_action(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.integers(n) for n in self.block_sizes])

    def midpoint_share_index(self) -> int:
        return (len(self.share_grid) - 1) // 2


def poisson_weights(mean_events: float, counts: np.ndarray) -> np.ndarray:
    """Normalized Poisson pmf values over the per-point event counts."""
    if mean_events <= 0:
        raise ValueError("mean must be positive")
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    log_pmf = counts * math.log(mean_events) - mean_events \
        - np.array([math.lgamma(k + 1.0) for k in counts])
    log_pmf -= log_pmf.max()
    pmf = np.exp(log_pmf)
    return pmf / pmf.sum()


class SimEnv:
    """Episode-based simulator.  reset(seed) fixes weights and channels; each
    step applies absolute grid re-selections and rewards objective deltas."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.grid = build_grid(scenario.side_length, scenario.grid_side,
                               scenario.bs_height, scenario.surfaces)
        self.params = scenario.env
        self.layout = ActionLayout(self.grid.n_surfaces, scenario.k_total,
                                   scenario.env)
        self.k_reflect = scenario.k_reflect_eff
        self.k_transmit = scenario.k_total - self.k_reflect
        if self.grid.n_surfaces and (self.k_reflect < 1 or self.k_transmit < 1):
            raise ValueError("both mode groups need at least one element")
        self._precompute_geometry()
        self._channels = None
        self._cascades = None
        self.weights: ObjectiveWeights | None = None
        self.state: MoState | None = None
        self.metrics: NetworkMetrics | None = None

    # -- geometry-only precomputation ------------------------------------
    def _precompute_geometry(self) -> None:
        n_s, n_pts = self.grid.n_surfaces, self.grid.n_points
        self.point_side = np.zeros((n_s, n_pts), dtype=np.uint8)
        self.direct_gate = np.zeros((2, max(n_s, 1), n_pts))
        if n_s == 0:
            self.direct_gate[:] = 1.0
            return
        for ns, placement in enumerate(self.grid.ris_placements):
            ind = self.grid.indicators(placement)
            self.point_side[ns] = (
                self.grid.sample_points[:, 0] < placement.x).astype(np.uint8)
            for a in range(2):
                for i in range(n_pts):
                    if ind.i_link == 0:
                        gate = 0.0
                    elif ind.i_height == 1:
                        gate = 1.0
                    else:
                        gate = 0.0 if panel_blocks_ray(
                            placement, self.grid.bs_positions[a],
                            self.grid.sample_points[i]) else 1.0
                    self.direct_gate[a, ns, i] = gate

    # -- episode protocol -------------------------------------------------
    def reset(self, seed: int) -> MoState:
        rng = np.random.default_rng(seed)
        n_pts = self.grid.n_points
        cov_counts = rng.poisson(self.params.coverage_events_mean, n_pts)
        cap_counts = rng.poisson(self.params.capacity_events_mean, n_pts)
        self.weights = ObjectiveWeights(
            coverage=poisson_weights(self.params.coverage_events_mean, cov_counts),
            capacity=poisson_weights(self.params.capacity_events_mean, cap_counts),
        )
        self._channels = draw_realization(self.grid, self.scenario.channel,
                                          self.scenario.k_horizontal,
                                          self.scenario.k_vertical, rng)
        self._cascades = self._channels.cascades()

        mid = self.layout.midpoint_share_index()
        surfaces = []
        for _ in range(self.grid.n_surfaces):
            phases_re = self.layout.phase_grid[
                rng.integers(len(self.layout.phase_grid), size=self.k_reflect)]
            phases_tr = self.layout.phase_grid[
                rng.integers(len(self.layout.phase_grid), size=self.k_transmit)]
            surfaces.append(self._make_surface(mid, phases_re, phases_tr))
        self.state = MoState(tuple(surfaces), self.params.initial_power_mw)
        self.metrics = self.evaluate(self.state)
        return self.state

    def _make_surface(self, share_index: int, phases_re: np.ndarray,
                      phases_tr: np.ndarray) -> StarRisState:
        # The share grid value is the fraction of re-radiated energy sent to
        # the transmission side; amplitudes follow from the energy identity.
        share_tr = self.layout.share_grid[share_index]
        scale = 1.0 / (self.k_transmit * share_tr + self.k_reflect * (1.0 - share_tr))
        state = StarRisState(
            k_reflect=self.k_reflect,
            k_transmit=self.k_transmit,
            beta_reflect=(1.0 - share_tr) * scale,
            beta_transmit=share_tr * scale,
            phases_reflect=phases_re,
            phases_transmit=phases_tr,
        )
        state.validate()
        return state

    def step(self, action: np.ndarray) -> tuple[MoState, np.ndarray, NetworkMetrics]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        action = np.asarray(action, dtype=int)
        if len(action) != self.layout.n_blocks:
            raise ValueError("action length mismatch")
        for idx, size in zip(action, self.layout.block_sizes):
            if not (0 <= idx < size):
                raise ValueError("action index out of range")

        surfaces = []
        cursor = 0
        k = self.scenario.k_total
        for ns in range(self.grid.n_surfaces):
            # reflection-split block is superseded by the energy constraint
            share_index = int(action[cursor + 1])
            phase_idx = action[cursor + 2:cursor + 2 + k]
            phases = self.layout.phase_grid[phase_idx]
            surfaces.append(self._make_surface(
                share_index, phases[:self.k_reflect], phases[self.k_reflect:]))
            cursor += 2 + k
        power = self.layout.power_value(int(action[cursor]))
        power = min(power, self.params.max_power_mw)
        new_state = MoState(tuple(surfaces), power)

        new_metrics = self.evaluate(new_state)
        reward = np.array([
            new_metrics.coverage - self.metrics.coverage,
            new_metrics.capacity - self.metrics.capacity,
        ])
        self.state = new_state
        self.metrics = new_metrics
        return new_state, reward, new_metrics

    # -- metric evaluation --------------------------------------------------
    def link_amplitudes(self, state: MoState) -> np.ndarray:
        """Noise-free per-link amplitudes (2, max(Ns, 1), N) for unit symbol."""
        if self.grid.n_surfaces == 0:
            return self._channels.bs_point[:, None, :].copy()
        coeff = np.stack([s.coefficients() for s in state.surfaces])
        return _kernels.link_amplitudes(
            self._cascades, coeff, self.k_reflect, self.point_side,
            self._channels.bs_point, self.direct_gate)

    def evaluate(self, state: MoState) -> NetworkMetrics:
        amps = self.link_amplitudes(state)
        powers = np.abs(amps) ** 2 * state.power_mw
        return metrics_from_powers(powers, self.weights, self.params.noise_mw,
                                   self.params.rsrp_threshold_mw,
                                   self.params.bandwidth_hz)

    # -- trainer-facing helpers ----------------------------------------------
    @property
    def observation_size(self) -> int:
        return self.grid.n_surfaces * (self.scenario.k_total + 2) + 1

    def observe(self) -> np.ndarray:
        return self.state.features(self.params.max_power_mw)
