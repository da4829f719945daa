"""Hot numeric kernels: per-step link amplitude evaluation.

Every environment step recomputes the noise-free amplitude of each
(BS, panel, point) link from the cached per-element cascades and the current
panel coefficients.  That triple loop dominates training runtime, so it is
compiled with numba when available.  Setting the environment variable
``STARCCO_NUMBA=0`` selects the pure-numpy path instead (same results up to
floating-point rounding); ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "HAS_NUMBA",
    "USING_NUMBA",
    "link_amplitudes",
    "link_amplitudes_numpy",
]


def link_amplitudes_numpy(cascades: np.ndarray, coeff: np.ndarray,
                          k_reflect: int, point_side: np.ndarray,
                          direct: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """Noise-free link amplitudes, (2, Ns, N) complex.

    cascades:   (2, Ns, N, K) per-element cascade channels.
    coeff:      (Ns, K) panel coefficients sqrt(beta_mode) exp(j phase), with
                elements [0, k_reflect) in reflection mode and the rest in
                transmission mode.
    point_side: (Ns, N) uint8, 0 where the point sees the reflection side of
                panel ns, 1 for the transmission side.
    direct:     (2, N) direct-link channels.
    gate:       (2, Ns, N) float 0/1, whether the direct term enters the link.
    """
    n_bs, n_s, n_pts, k_total = cascades.shape
    if n_s == 0:
        return gate * direct[:, None, :]
    side_mask = np.zeros((2, k_total))
    side_mask[0, :k_reflect] = 1.0
    side_mask[1, k_reflect:] = 1.0
    # (Ns, N, K): coefficients visible to each point of each panel
    coeff_vis = coeff[:, None, :] * side_mask[point_side]
    amps = np.einsum("anik,nik->ani", cascades, coeff_vis)
    amps += gate * direct[:, None, :]
    return amps


def _link_amplitudes_jit_impl(cascades, coeff, k_reflect, point_side, direct, gate):
    n_bs, n_s, n_pts, k_total = cascades.shape
    out = np.empty((n_bs, n_s, n_pts), dtype=np.complex128)
    for a in range(n_bs):
        for ns in range(n_s):
            for i in range(n_pts):
                if point_side[ns, i] == 0:
                    lo, hi = 0, k_reflect
                else:
                    lo, hi = k_reflect, k_total
                acc = 0.0 + 0.0j
                for k in range(lo, hi):
                    acc += cascades[a, ns, i, k] * coeff[ns, k]
                out[a, ns, i] = acc + gate[a, ns, i] * direct[a, i]
    return out


def _numba_enabled() -> bool:
    flag = os.environ.get("STARCCO_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


try:
    from numba import njit

    link_amplitudes_numba = njit(cache=True)(_link_amplitudes_jit_impl)
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    link_amplitudes_numba = None
    HAS_NUMBA = False

USING_NUMBA = HAS_NUMBA and _numba_enabled()


def link_amplitudes(cascades, coeff, k_reflect, point_side, direct, gate):
    if USING_NUMBA:
        if cascades.shape[1] == 0:
            # numba cannot type empty reductions over a zero-size axis cheaply
            return gate * direct[:, None, :]
        return link_amplitudes_numba(cascades, coeff, k_reflect, point_side,
                                     direct, gate)
    return link_amplitudes_numpy(cascades, coeff, k_reflect, point_side, direct, gate)
