"""Grid-based serving area: sample points, BS/STAR-RIS placement, blockage indicators.

The serving area is a square of side ``side_length`` discretized into square
grids of side ``grid_side``; the centre of each grid is a sample point at
z = 0.  Two BSs sit at the bottom-left/bottom-right corners of the x = Rs
edge at height ``bs_height``.  STAR-RIS panels are vertical rectangles lying
along the y-axis (no rotation supported).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RisPlacement",
    "GridMap",
    "LinkIndicators",
    "build_grid",
    "height_indicator",
    "width_indicator",
    "link_indicator",
    "element_position",
    "element_grid",
    "panel_blocks_ray",
]


@dataclass(frozen=True)
class RisPlacement:
    """One STAR-RIS panel: (x, y) anchor in metres, panel height and width in metres."""

    x: float
    y: float
    height: float
    width: float

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError("panel height and width must be positive")

    @property
    def position(self) -> np.ndarray:
        """3D reference point of the panel (top edge centre convention)."""
        return np.array([self.x, self.y, self.height])


@dataclass(frozen=True)
class LinkIndicators:
    """Blockage indicators for one panel: i_height, i_width and their OR."""

    i_height: int
    i_width: int
    i_link: int

    def __post_init__(self):
        for v in (self.i_height, self.i_width, self.i_link):
            if v not in (0, 1):
                raise ValueError("indicators must be 0 or 1")
        if self.i_link != (self.i_height | self.i_width):
            raise ValueError("combined indicator must be the OR of the components")


@dataclass(frozen=True)
class GridMap:
    side_length: float              # Rs, metres
    grid_side: float                # Rg, metres
    bs_height: float                # h_b, metres
    n_points: int                   # N = ceil(Rs/Rg)^2
    sample_points: np.ndarray       # (N, 3), z = 0, row-major grid centres
    bs_positions: np.ndarray        # (2, 3)
    ris_placements: tuple[RisPlacement, ...]

    @property
    def n_surfaces(self) -> int:
        return len(self.ris_placements)

    def indicators(self, placement: RisPlacement) -> LinkIndicators:
        """Blockage indicators of one panel within this serving area."""
        i_h = height_indicator(placement.height, self.grid_side, self.bs_height,
                               self.side_length)
        i_w = width_indicator(placement.width, self.grid_side, self.side_length)
        return LinkIndicators(i_h, i_w, link_indicator(i_h, i_w))


def build_grid(side_length: float, grid_side: float, bs_height: float,
               placements: list[RisPlacement] | tuple[RisPlacement, ...] = ()) -> GridMap:
    """Discretize the serving square and place BSs and panels.

    Sample point i (row-major) sits at ((row + 0.5) Rg, (col + 0.5) Rg, 0).
    Boundary grids of a non-integer Rs/Rg ratio keep full size; only the
    ceil(Rs/Rg)^2 centre points are ever evaluated.
    """
    if side_length <= 0:
        raise ValueError("side_length must be positive")
    if grid_side <= 0 or grid_side > side_length:
        raise ValueError("grid_side must lie in (0, side_length]")
    if bs_height <= 0:
        raise ValueError("bs_height must be positive")

    placements = tuple(placements)
    seen = set()
    for p in placements:
        if not (0.0 < p.x < side_length and 0.0 < p.y < side_length):
            raise ValueError(f"panel at ({p.x}, {p.y}) is not strictly inside the area")
        if (p.x, p.y) in seen:
            raise ValueError(f"two panels share coordinates ({p.x}, {p.y})")
        seen.add((p.x, p.y))

    per_side = math.ceil(side_length / grid_side)
    rows, cols = np.meshgrid(np.arange(per_side), np.arange(per_side), indexing="ij")
    points = np.column_stack([
        (rows.ravel() + 0.5) * grid_side,
        (cols.ravel() + 0.5) * grid_side,
        np.zeros(per_side * per_side),
    ])
    bs = np.array([
        [side_length, 0.0, bs_height],
        [side_length, side_length, bs_height],
    ])
    return GridMap(
        side_length=side_length,
        grid_side=grid_side,
        bs_height=bs_height,
        n_points=per_side * per_side,
        sample_points=points,
        bs_positions=bs,
        ris_placements=placements,
    )


def height_indicator(panel_height: float, grid_side: float, bs_height: float,
                     side_length: float) -> int:
    """1 iff the panel is short enough that no BS-to-point ray can pass below its top.

    Threshold: Rg * h_b / (2 Rs - Rg).
    """
    _check_indicator_args(grid_side, side_length)
    if panel_height <= 0 or bs_height <= 0:
        raise ValueError("heights must be positive")
    threshold = grid_side * bs_height / (2.0 * side_length - grid_side)
    return 1 if panel_height <= threshold else 0


def width_indicator(panel_width: float, grid_side: float, side_length: float) -> int:
    """1 iff the panel is narrow enough to never span a BS-to-point ray laterally.

    Threshold: Rg * Rs / (2 Rs - Rg).
    """
    _check_indicator_args(grid_side, side_length)
    if panel_width <= 0:
        raise ValueError("width must be positive")
    threshold = grid_side * side_length / (2.0 * side_length - grid_side)
    return 1 if panel_width <= threshold else 0


def _check_indicator_args(grid_side: float, side_length: float) -> None:
    if grid_side <= 0 or side_length <= 0:
        raise ValueError("lengths must be positive")
    if 2.0 * side_length <= grid_side:
        raise ValueError("degenerate geometry: need 2 Rs > Rg")


def link_indicator(i_height: int, i_width: int) -> int:
    """OR of the two size indicators: 1 iff a direct link can exist."""
    if i_height not in (0, 1) or i_width not in (0, 1):
        raise ValueError("indicator inputs must be 0 or 1")
    return i_height | i_width


def element_position(k: int, k_horizontal: int, elem_width: float,
                     elem_height: float) -> np.ndarray:
    """Location of the k-th panel element (1-based), edge-to-edge layout.

    l_k = [0, mod(k-1, K_H) * M_H, floor((k-1) / K_H) * M_V].
    """
    if k < 1:
        raise ValueError("element index is 1-based")
    col = (k - 1) % k_horizontal
    row = (k - 1) // k_horizontal
    return np.array([0.0, col * elem_width, row * elem_height])


def element_grid(k_horizontal: int, k_vertical: int, elem_width: float,
                 elem_height: float) -> np.ndarray:
    """All K = K_H * K_V element positions as a (K, 3) array, k ascending."""
    total = k_horizontal * k_vertical
    ks = np.arange(total)
    out = np.zeros((total, 3))
    out[:, 1] = (ks % k_horizontal) * elem_width
    out[:, 2] = (ks // k_horizontal) * elem_height
    return out


def panel_blocks_ray(placement: RisPlacement, src: np.ndarray, dst: np.ndarray) -> bool:
    """True iff the segment src->dst crosses the panel rectangle.

    The panel occupies the plane x = placement.x over
    y in [y - w/2, y + w/2], z in [0, height].
    """
    sx, dx = src[0] - placement.x, dst[0] - placement.x
    if sx * dx >= 0.0:
        return False
    t = sx / (sx - dx)
    y_hit = src[1] + t * (dst[1] - src[1])
    z_hit = src[2] + t * (dst[2] - src[2])
    return (abs(y_hit - placement.y) <= placement.width / 2.0
            and 0.0 <= z_hit <= placement.height)
