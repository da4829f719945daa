"""Rician fading channels with geometric LOS components and power-law path loss.

Three link classes are modelled: BS -> panel, panel -> sample point and
BS -> sample point.  Panel links are K-element complex vectors whose LOS part
is the plane-wave array response at the link angles; the direct BS-to-point
link is a scalar with a distance-phase LOS term.  All gains are linear power
ratios; powers are in mW throughout the package.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridMap, element_grid

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
REFERENCE_DISTANCE = 1.0        # m

__all__ = [
    "ChannelParams",
    "ChannelRealization",
    "wave_vector",
    "array_response",
    "los_angles",
    "path_loss",
    "rician_sample",
    "draw_realization",
]


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants for the three link classes.

    ``ref_gain_db`` is the linear power gain at the 1 m reference distance in
    dB; with ``c0_from_frequency`` the reference gain is instead computed from
    the carrier as c / (4 pi d0 f_c), which ties the gain to the band (used by
    the 3.5 vs 26 GHz comparison).  ``los_only`` forces pure-LOS channels
    (mmWave setting).
    """

    carrier_hz: float = 3.5e9
    ref_gain_db: float = -30.0
    c0_from_frequency: bool = False
    rician_db: dict = field(default_factory=lambda: {
        "bs_ris": 3.0, "ris_point": 3.0, "bs_point": 3.0})
    path_loss_exp: dict = field(default_factory=lambda: {
        "bs_ris": 3.5, "ris_point": 2.8, "bs_point": 2.2})
    element_width: float = 0.025   # M_H, metres
    element_height: float = 0.025  # M_V, metres
    los_only: bool = False

    def __post_init__(self):
        if self.carrier_hz <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.element_width <= 0 or self.element_height <= 0:
            raise ValueError("element dimensions must be positive")
        for name in ("bs_ris", "ris_point", "bs_point"):
            if name not in self.rician_db or name not in self.path_loss_exp:
                raise ValueError(f"missing link class {name!r}")
            if self.path_loss_exp[name] <= 0:
                raise ValueError("path loss exponents must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def ref_gain(self) -> float:
        """Linear power gain at d0 = 1 m."""
        if self.c0_from_frequency:
            return SPEED_OF_LIGHT / (4.0 * math.pi * REFERENCE_DISTANCE * self.carrier_hz)
        return 10.0 ** (self.ref_gain_db / 10.0)

    def rician_factor(self, link: str) -> float:
        """Linear Rician factor for a link class; infinite when LOS-only."""
        if self.los_only:
            return math.inf
        return 10.0 ** (self.rician_db[link] / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every channel in the network.

    bs_ris:   (2, Ns, K) complex, BS a -> panel ns, all K elements.
    ris_point:(Ns, N, K) complex, panel ns -> point i.
    bs_point: (2, N) complex, direct links.
    """

    bs_ris: np.ndarray
    ris_point: np.ndarray
    bs_point: np.ndarray

    def __post_init__(self):
        for arr in (self.bs_ris, self.ris_point, self.bs_point):
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise ValueError("channel realization contains non-finite entries")

    def cascades(self) -> np.ndarray:
        """Per-element cascade conj(h_panel_point) * h_bs_panel, (2, Ns, N, K).

        The received cascaded amplitude of link (a, ns, i) under coefficients
        c_k is sum_k c_k * cascades[a, ns, i, k].
        """
        return np.conj(self.ris_point)[None, :, :, :] * self.bs_ris[:, :, None, :]


def wave_vector(azimuth: float, elevation: float, wavelength: float) -> np.ndarray:
    """Plane-wave vector (2 pi / lambda) [cos(el)cos(az), cos(el)sin(az), sin(el)]."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    ce = math.cos(elevation)
    return (2.0 * math.pi / wavelength) * np.array([
        ce * math.cos(azimuth), ce * math.sin(azimuth), math.sin(elevation)])


def array_response(azimuth: float, elevation: float, positions: np.ndarray,
                   wavelength: float) -> np.ndarray:
    """Unit-modulus response exp(j b^T l_k) over the element positions (K, 3)."""
    b = wave_vector(azimuth, elevation, wavelength)
    return np.exp(1j * positions @ b)


def los_angles(src: np.ndarray, dst: np.ndarray) -> tuple[float, float]:
    """(azimuth, elevation) of the src -> dst link.

    Elevation is the depression angle arcsin((src_z - dst_z) / d3D); azimuth is
    arccos((dst_x - src_x) / d2D) signed by the y-offset.  A vertical link
    (zero 2D distance) gets azimuth 0.
    """
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    d3 = float(np.linalg.norm(delta))
    if d3 == 0.0:
        raise ValueError("src and dst coincide")
    d2 = math.hypot(delta[0], delta[1])
    elevation = math.asin(max(-1.0, min(1.0, -delta[2] / d3)))
    if d2 == 0.0:
        return 0.0, elevation
    azimuth = math.acos(max(-1.0, min(1.0, delta[0] / d2)))
    if delta[1] < 0:
        azimuth = -azimuth
    return azimuth, elevation


def path_loss(distance: float, exponent: float, ref_gain: float) -> float:
    """Linear power gain ref_gain * d^(-exponent); distances below 1 m are clamped."""
    if distance < REFERENCE_DISTANCE:
        log.warning("distance %.3g m below reference 1 m; clamping", distance)
        distance = REFERENCE_DISTANCE
    return ref_gain * distance ** (-exponent)


def rician_sample(los: np.ndarray, rician_factor: float, gain: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Rician mix sqrt(gain) (sqrt(a/(1+a)) los + sqrt(1/(1+a)) n), n ~ CN(0, I).

    An infinite factor yields the pure LOS channel; zero yields pure Rayleigh.
    For unit-modulus LOS entries E|h_k|^2 = gain for every factor.
    """
    los = np.asarray(los, dtype=complex)
    if rician_factor < 0:
        raise ValueError("Rician factor must be non-negative")
    if gain <= 0:
        raise ValueError("gain must be positive")
    if math.isinf(rician_factor):
        return math.sqrt(gain) * los
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) \
        / math.sqrt(2.0)
    w_los = math.sqrt(rician_factor / (1.0 + rician_factor))
    w_nlos = math.sqrt(1.0 / (1.0 + rician_factor))
    return math.sqrt(gain) * (w_los * los + w_nlos * nlos)


def draw_realization(grid: GridMap, params: ChannelParams, k_horizontal: int,
                     k_vertical: int, rng: np.random.Generator) -> ChannelRealization:
    """Sample every link of the network once.

    Panel LOS components are array responses at the link angles taken at the
    panel reference point; the direct-link LOS is the distance phase
    exp(-j 2 pi d / lambda).
    """
    lam = params.wavelength
    c0 = params.ref_gain
    n_bs = grid.bs_positions.shape[0]
    n_s = grid.n_surfaces
    n_pts = grid.n_points
    k_total = k_horizontal * k_vertical
    elements = element_grid(k_horizontal, k_vertical,
                            params.element_width, params.element_height)

    bs_ris = np.zeros((n_bs, n_s, k_total), dtype=complex)
    ris_point = np.zeros((n_s, n_pts, k_total), dtype=complex)
    bs_point = np.zeros((n_bs, n_pts), dtype=complex)

    for ns, placement in enumerate(grid.ris_placements):
        anchor = placement.position
        for a in range(n_bs):
            src = grid.bs_positions[a]
            az, el = los_angles(src, anchor)
            gain = path_loss(float(np.linalg.norm(src - anchor)),
                             params.path_loss_exp["bs_ris"], c0)
            los = array_response(az, el, elements, lam)
            bs_ris[a, ns] = rician_sample(los, params.rician_factor("bs_ris"),
                                          gain, rng)
        for i in range(n_pts):
            dst = grid.sample_points[i]
            az, el = los_angles(anchor, dst)
            gain = path_loss(float(np.linalg.norm(anchor - dst)),
                             params.path_loss_exp["ris_point"], c0)
            los = array_response(az, el, elements, lam)
            ris_point[ns, i] = rician_sample(los, params.rician_factor("ris_point"),
                                             gain, rng)

    for a in range(n_bs):
        src = grid.bs_positions[a]
        for i in range(n_pts):
            dist = float(np.linalg.norm(src - grid.sample_points[i]))
            gain = path_loss(dist, params.path_loss_exp["bs_point"], c0)
            los = np.exp(-2j * math.pi * dist / lam)
            bs_point[a, i] = rician_sample(los, params.rician_factor("bs_point"),
                                           gain, rng)[()]

    return ChannelRealization(bs_ris=bs_ris, ris_point=ris_point, bs_point=bs_point)
