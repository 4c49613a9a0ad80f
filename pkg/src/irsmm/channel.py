"""Three-segment channel generation and the stacked equivalent channel.

Links: BS -> user (Rayleigh), BS -> IRS (Rayleigh), IRS -> user (Rician).
Large-scale gain follows PL(dB) = -30 - 10*alpha*log10(d). The equivalent
channel of user k is the (M+1) x N stack

    H_k = [diag(h_r,k^H) @ H_dr ; h_d,k^H]

so that e^H H_k f = h_d,k^H f + h_r,k^H diag(conj(e_1..e_M)) H_dr f with
e_{M+1} = 1. The physical reflection coefficient of element m is conj(e_m);
since |e_m| = 1 the feasible set is unchanged by the conjugation.
"""

import math
from dataclasses import dataclass

import numpy as np


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def path_loss_db(d, alpha):
    """Large-scale path loss -30 - 10*alpha*log10(d), d in meters."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    if alpha <= 0:
        raise ValueError(f"path-loss exponent must be positive, got {alpha}")
    return -30.0 - 10.0 * alpha * math.log10(d)


@dataclass(frozen=True)
class ChannelConfig:
    """Geometry, fading, and noise parameters of the simulated network."""

    bs_pos: tuple = (0.0, 0.0)  # meters
    irs_pos: tuple = (100.0, 0.0)
    user_center: tuple = (120.0, 20.0)
    user_radius: float = 10.0
    alpha_bi: float = 2.0  # BS-IRS path-loss exponent
    alpha_iu: float = 2.0  # IRS-user
    alpha_bu: float = 4.0  # BS-user
    kappa_iu: float = 10.0  # Rician factor, linear
    bandwidth_hz: float = 10e6
    noise_dbm_hz: float = -174.0

    def __post_init__(self):
        if self.alpha_bi <= 0 or self.alpha_iu <= 0 or self.alpha_bu <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.kappa_iu < 0:
            raise ValueError("Rician factor must be nonnegative")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.user_radius < 0:
            raise ValueError("user-disk radius must be nonnegative")

    def noise_power_w(self):
        """sigma^2 = noise density * bandwidth, in watts."""
        total_dbm = self.noise_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)
        return 10.0 ** ((total_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all links plus the assembled equivalent channels.

    h_d (K,N), h_r (K,M), H_dr (M,N), H (K,M+1,N), sigma2 (K,) in watts.
    user_pos and per-link linear gains are kept for diagnostics and tests.
    """

    h_d: np.ndarray
    h_r: np.ndarray
    H_dr: np.ndarray
    H: np.ndarray
    sigma2: np.ndarray
    user_pos: np.ndarray
    g_bu: np.ndarray
    g_iu: np.ndarray
    g_bi: float

    @property
    def K(self):
        return self.h_d.shape[0]

    def save(self, path):
        """Dump to .npz for regression fixtures."""
        np.savez(
            path,
            h_d=self.h_d, h_r=self.h_r, H_dr=self.H_dr, H=self.H,
            sigma2=self.sigma2, user_pos=self.user_pos,
            g_bu=self.g_bu, g_iu=self.g_iu, g_bi=np.float64(self.g_bi),
        )

    @staticmethod
    def load(path):
        z = np.load(path)
        return ChannelSet(
            h_d=z["h_d"], h_r=z["h_r"], H_dr=z["H_dr"], H=z["H"],
            sigma2=z["sigma2"], user_pos=z["user_pos"],
            g_bu=z["g_bu"], g_iu=z["g_iu"], g_bi=float(z["g_bi"]),
        )


def assemble_equivalent(h_d, h_r, H_dr):
    """Stack [diag(h_r,k^H) @ H_dr ; h_d,k^H] for every user. Returns (K,M+1,N)."""
    K, N = h_d.shape
    M = h_r.shape[1]
    H = np.empty((K, M + 1, N), dtype=np.complex128)
    for k in range(K):
        H[k, :M, :] = h_r[k].conj()[:, None] * H_dr
        H[k, M, :] = h_d[k].conj()
    return H


def upa_response(m_width, m_len, u_y, u_z):
    """UPA steering vector, half-wavelength spacing, element m = i_z*width + i_y.

    u_y, u_z are direction cosines along the two array axes.
    """
    i_y = np.arange(m_width)
    i_z = np.arange(m_len)
    phase = np.pi * (i_z[:, None] * u_z + i_y[None, :] * u_y)
    return np.exp(1j * phase).reshape(-1)  # index i_z*width + i_y


def gen_channels(cfg, scenario, seed):
    """Draw one channel realization. Deterministic for a fixed seed.

    Uses a counter-based Philox generator keyed by the seed; the harness
    derives per-trial seeds as base_seed XOR trial_index so parallel trials
    reproduce serial ones. Draw order is fixed: user positions, H_dr, h_d,
    then the Rayleigh part of h_r.
    """
    N, M, K = scenario.N, scenario.M, scenario.K
    if M % 4 != 0:
        raise ValueError(f"UPA geometry needs M divisible by 4, got M={M}")
    rng = np.random.Generator(np.random.Philox(key=seed))

    bs = np.asarray(cfg.bs_pos, dtype=float)
    irs = np.asarray(cfg.irs_pos, dtype=float)
    center = np.asarray(cfg.user_center, dtype=float)

    # uniform in the disk: radius via sqrt so area density is constant
    r = cfg.user_radius * np.sqrt(rng.random(K))
    phi = 2.0 * np.pi * rng.random(K)
    user_pos = center + np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)

    d_bi = float(np.linalg.norm(irs - bs))
    d_bu = np.linalg.norm(user_pos - bs, axis=1)
    d_iu = np.linalg.norm(user_pos - irs, axis=1)
    g_bi = db_to_linear(path_loss_db(d_bi, cfg.alpha_bi))
    g_bu = db_to_linear(np.array([path_loss_db(d, cfg.alpha_bu) for d in d_bu]))
    g_iu = db_to_linear(np.array([path_loss_db(d, cfg.alpha_iu) for d in d_iu]))

    def cn(*shape):
        # CN(0,1) entries: unit-variance circular complex Gaussian
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    H_dr = np.sqrt(g_bi) * cn(M, N)
    h_d = np.sqrt(g_bu)[:, None] * cn(K, N)

    # IRS -> user: Rician with a steering-vector LoS component
    h_r_nlos = cn(K, M)
    h_r = np.empty((K, M), dtype=np.complex128)
    kap = cfg.kappa_iu
    for k in range(K):
        dvec = user_pos[k] - irs
        u_y = dvec[1] / d_iu[k]  # planar geometry: users at elevation 0
        los = upa_response(4, M // 4, u_y, 0.0)
        h_r[k] = np.sqrt(g_iu[k]) * (
            np.sqrt(kap / (1.0 + kap)) * los + np.sqrt(1.0 / (1.0 + kap)) * h_r_nlos[k]
        )

    sigma2 = np.full(K, cfg.noise_power_w())
    H = assemble_equivalent(h_d, h_r, H_dr)
    return ChannelSet(
        h_d=h_d, h_r=h_r, H_dr=H_dr, H=H, sigma2=sigma2,
        user_pos=user_pos, g_bu=g_bu, g_iu=g_iu, g_bi=g_bi,
    )


def equivalent_channel(chset, k):
    """The (M+1) x N equivalent channel of user k."""
    if not 0 <= k < chset.K:
        raise IndexError(f"user index {k} out of range [0, {chset.K})")
    return chset.H[k]
