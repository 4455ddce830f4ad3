"""Effective wind speed, Hellmann shear exponent and power-law height extrapolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError

# speeds at or below this make ln(v_hi / v_lo) unstable
MIN_SHEAR_SPEED = 0.1
NEUTRAL_ALPHA = 1.0 / 7.0
ALPHA_BOUNDS = (-1.0, 2.0)


@dataclass(frozen=True)
class HeightPair:
    h_lo: float
    h_hi: float

    def __post_init__(self):
        if not (0 < self.h_lo < self.h_hi):
            raise DomainError(f"heights must satisfy 0 < h_lo < h_hi, got ({self.h_lo}, {self.h_hi})")


class ShearExponent(NamedTuple):
    """Per-timestep Hellmann exponent with the reasons it deviates from the raw log ratio."""

    alpha: np.ndarray
    fallback: np.ndarray
    clamped: np.ndarray


def effective_speed(u, v):
    """Horizontal wind speed from eastward and northward components.

    Parameters
    ----------
    u, v : float or array_like
        Wind components in m/s.

    Returns
    -------
    float or numpy.ndarray
        ``sqrt(u**2 + v**2)``; scalar in, scalar out.
    """
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    if not (np.all(np.isfinite(u_arr)) and np.all(np.isfinite(v_arr))):
        raise DomainError("wind components must be finite")
    speed = np.hypot(u_arr, v_arr)
    return speed.item() if speed.ndim == 0 else speed


def hellmann_exponent(
    v_lo,
    v_hi,
    heights: HeightPair,
    *,
    eps: float = MIN_SHEAR_SPEED,
    fallback: float = NEUTRAL_ALPHA,
    bounds: tuple[float, float] = ALPHA_BOUNDS,
) -> ShearExponent:
    """Shear exponent ``ln(v_hi / v_lo) / ln(h_hi / h_lo)`` evaluated elementwise.

    Where either speed is ``<= eps`` the exponent is replaced by ``fallback``.
    The result is clipped to ``bounds``; both events are reported per element.
    """
    lo = np.atleast_1d(np.asarray(v_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(v_hi, dtype=float))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError("wind speeds must be finite")
    lo, hi = np.broadcast_arrays(lo, hi)

    weak = (lo <= eps) | (hi <= eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.log(hi / lo) / np.log(heights.h_hi / heights.h_lo)
    raw = np.where(weak, fallback, raw)
    alpha = np.clip(raw, bounds[0], bounds[1])
    clamped = (alpha != raw) & ~weak
    return ShearExponent(alpha, weak.copy(), clamped)


def extrapolate_to_hub(v_ref, h_ref: float, alpha, hub: float):
    """Power-law extrapolation ``v_ref * (hub / h_ref) ** alpha``."""
    v = np.asarray(v_ref, dtype=float)
    if h_ref <= 0 or hub <= 0:
        raise DomainError(f"heights must be positive, got h_ref={h_ref}, hub={hub}")
    if np.any(v < 0):
        raise DomainError("reference speed must be non-negative")
    out = v * np.power(hub / h_ref, np.asarray(alpha, dtype=float))
    return out.item() if np.ndim(out) == 0 else out
