"""No-IRS baseline, discrete-phase quantization, and energy-efficiency accounting."""

from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelSet, assemble_equivalent

TIE_EPS = 1e-12


@dataclass(frozen=True)
class PowerModel:
    """Linear consumption model: amplifier inefficiency plus static circuits."""

    p_T: float  # transmit power, watts
    eta: float = 1.2  # amplifier inefficiency, >= 1
    p_t: float = 0.2  # per-transmit-antenna circuit power, watts
    p_r: float = 0.2  # per-receive-antenna circuit power, watts
    p_irs: float = 0.005  # per-reflecting-element circuit power, watts

    def __post_init__(self):
        if self.eta < 1.0:
            raise ValueError("amplifier inefficiency must be at least 1")
        for name in ("p_T", "p_t", "p_r", "p_irs"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


def total_power_w(pm, mode, N, M):
    """Consumed power in watts for the given architecture."""
    if mode == "irs":
        return pm.eta * pm.p_T + N * pm.p_t + M * pm.p_irs
    if mode == "no-irs":
        return pm.eta * pm.p_T + N * pm.p_t
    raise ValueError(f"unknown mode {mode!r}, expected 'irs' or 'no-irs'")


def energy_efficiency(sum_rate, pm, mode, N, M):
    """Sum rate (bps/Hz) divided by consumed power, in bit/Hz/J."""
    power = total_power_w(pm, mode, N, M)
    if power <= 0.0:
        raise ValueError("total consumed power must be positive")
    return sum_rate / power


def quantize_phases(e, bits):
    """Snap the first M reflection phases to the nearest of 2^bits levels.

    Nearest is measured by chordal distance |exp(j theta) - e_m|; exact ties
    go to the lowest phase index. The pinned last entry is never touched,
    and the map is idempotent (grid points are their own nearest neighbor).
    """
    if bits < 1:
        raise ValueError("bits must be at least 1")
    e = np.asarray(e, dtype=complex)
    B = 2 ** int(bits)
    levels = np.exp(2j * np.pi * np.arange(B) / B)
    out = e.copy()
    # chordal distances to every level, ties broken by argmin's first hit
    dist = np.abs(levels[None, :] - e[:-1, None])
    best = dist.min(axis=1)
    idx = (dist <= best[:, None] + TIE_EPS).argmax(axis=1)
    out[:-1] = levels[idx]
    return out


def without_irs(channels):
    """Channel realization with the reflected cascade removed.

    Zeroes every IRS-user link and reassembles the equivalent channels, so
    both algorithms run unchanged and see only the direct path.
    """
    h_r = np.zeros_like(channels.h_r)
    return replace(
        channels,
        h_r=h_r,
        H=assemble_equivalent(channels.h_d, h_r, channels.H_dr),
        g_iu=np.zeros_like(channels.g_iu),
    )
