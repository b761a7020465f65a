"""Spherical-wave sub-THz channel model and in-waveguide propagation.

Each channel entry combines an exact per-element distance phase with an
amplitude built from three factors: free-space spreading, molecular
absorption, and the element radiation profile evaluated at the per-element
elevation. All of it is differentiable in the user's (r, theta, phi), and
the analytic derivatives here are the workhorse for Fisher-information
assembly; finite differences exist only as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateGeometryError
from .geometry import DmaGeometry, UePosition, element_positions, waveguide_arc_lengths

SPEED_OF_LIGHT = 299_792_458.0

# Distance to the absolute-value kink of the per-element elevation below
# which derivative entries are flagged as unreliable, in meters.
KINK_EPSILON = 1e-9


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        raise ValueError(f"power must be positive to express in dBm, got {mw}")
    return 10.0 * np.log10(mw)


def thermal_noise_dbm(bandwidth: float) -> float:
    """Thermal noise floor -174 + 10 log10(B) in dBm for bandwidth B in Hz."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return -174.0 + 10.0 * np.log10(bandwidth)


@dataclass(frozen=True)
class RadioConfig:
    """Carrier, bandwidth, and propagation constants.

    ``noise_power`` is in mW; when omitted it is derived from the thermal
    floor at the configured bandwidth. ``kappa_abs`` is the molecular
    absorption coefficient in 1/m and ``b_gain`` the radiation-profile
    exponent; both default to representative sub-THz values.
    """

    f_c: float
    bandwidth: float
    kappa_abs: float = 0.0033
    b_gain: float = 2.0
    noise_power: Optional[float] = None

    def __post_init__(self):
        if self.f_c <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.kappa_abs < 0 or self.b_gain < 0:
            raise ValueError("kappa_abs and b_gain must be nonnegative")
        if self.noise_power is None:
            object.__setattr__(self, "noise_power", dbm_to_mw(thermal_noise_dbm(self.bandwidth)))
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c


@dataclass
class NearFieldChannel:
    """Complex channel vector for one user, optionally with position derivatives.

    ``h`` has one entry per metamaterial (flat element order). When
    derivatives are populated, ``kink_mask`` marks entries whose elevation
    sits on or near the absolute-value kink (or at the grazing boundary),
    where the analytic derivative is untrustworthy.
    """

    h: np.ndarray
    dh_dr: Optional[np.ndarray] = None
    dh_dtheta: Optional[np.ndarray] = None
    dh_dphi: Optional[np.ndarray] = None
    kink_mask: Optional[np.ndarray] = None

    @property
    def has_derivatives(self) -> bool:
        return self.dh_dr is not None

    @property
    def near_kink(self) -> bool:
        return self.kink_mask is not None and bool(np.any(self.kink_mask))

    def derivative(self, name: str) -> np.ndarray:
        d = {"r": self.dh_dr, "theta": self.dh_dtheta, "phi": self.dh_dphi}[name]
        if d is None:
            raise ValueError("channel derivatives were not computed")
        return d


@dataclass(frozen=True)
class PropagationMatrix:
    """Diagonal in-waveguide propagation, one complex entry per element.

    Entry for element (i, n) is exp(-rho_{i,n} (alpha + j beta)) with
    rho_{i,n} = (n-1) d_e, so magnitudes never exceed 1 and equal 1 only
    for a lossless guide or the feed-adjacent element.
    """

    diag: np.ndarray
    n_rf: int
    n_e: int

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    def strip(self, i: int) -> np.ndarray:
        """Diagonal slice for 0-based microstrip i, shape (n_e,)."""
        return self.diag[i * self.n_e : (i + 1) * self.n_e]

    def per_strip(self) -> np.ndarray:
        """Diagonal reshaped to (n_rf, n_e)."""
        return self.diag.reshape(self.n_rf, self.n_e)


def radiation_profile(theta, b_gain: float):
    """Element radiation pattern 2(b+1) cos^b(theta) on [-pi/2, pi/2], else 0."""
    theta = np.asarray(theta, dtype=float)
    inside = np.abs(theta) <= np.pi / 2
    gain = np.where(inside, 2.0 * (b_gain + 1.0) * np.cos(np.where(inside, theta, 0.0)) ** b_gain, 0.0)
    if gain.ndim == 0:
        return float(gain)
    return gain


def attenuation(cfg: RadioConfig, distance, elem_elevation):
    """Amplitude factor sqrt(F(theta)) * lambda/(4 pi d) * exp(-kappa d / 2)."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    amp = (
        np.sqrt(radiation_profile(elem_elevation, cfg.b_gain))
        * cfg.wavelength
        / (4.0 * np.pi * distance)
        * np.exp(-0.5 * cfg.kappa_abs * distance)
    )
    if amp.ndim == 0:
        return float(amp)
    return amp


def propagation_matrix(geom: DmaGeometry) -> PropagationMatrix:
    """In-waveguide propagation factors for every element."""
    rho = waveguide_arc_lengths(geom)
    diag = np.exp(-rho * (geom.alpha_wg + 1j * geom.beta_wg))
    return PropagationMatrix(diag=diag, n_rf=geom.n_rf, n_e=geom.n_e)


def _geometry_terms(geom: DmaGeometry, positions: np.ndarray):
    """Distances, z-offsets and boresight ratios for spherical positions (..., 3).

    Returns (dx, dy, dz, dist, z_off, q) where z_off = z_elem - z_user and
    q = |z_off| / dist, each of shape (..., N).
    """
    r = positions[..., 0]
    theta = positions[..., 1]
    phi = positions[..., 2]
    elems = element_positions(geom)
    st = np.sin(theta)
    ux = r * st * np.cos(phi)
    uy = r * st * np.sin(phi)
    uz = r * np.cos(theta)
    dx = ux[..., None] - elems[:, 0]
    dy = np.broadcast_to(uy[..., None], dx.shape)
    dz = uz[..., None] - elems[:, 2]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)
    z_off = elems[:, 2] - uz[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.abs(z_off) / dist
    return dx, dy, dz, dist, z_off, q


def channel_matrix(cfg: RadioConfig, geom: DmaGeometry, positions: np.ndarray) -> np.ndarray:
    """Channel vectors for a batch of spherical positions.

    ``positions`` has shape (..., 3) holding (r, theta, phi); the result has
    shape (..., N). Raises DegenerateGeometryError when any position
    coincides with an element.
    """
    positions = np.asarray(positions, dtype=float)
    _, _, _, dist, _, q = _geometry_terms(geom, positions)
    if np.any(dist < 1e-12):
        raise DegenerateGeometryError("a position coincides with a panel element")
    return _entries_from(cfg, dist, np.clip(q, 0.0, 1.0))


def _entries_from(cfg: RadioConfig, dist: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Channel entries from distances and boresight ratios q = |z_off| / dist.

    The per-element elevation never leaves [0, pi/2], so the radiation
    profile reduces to 2(b+1) (1 - q^2)^(b/2); absorption decay and the
    distance phase share one complex exponential.
    """
    boresight = np.sqrt(2.0 * (cfg.b_gain + 1.0))
    amp = (
        boresight
        * (1.0 - q * q) ** (cfg.b_gain / 4.0)
        * (cfg.wavelength / (4.0 * np.pi))
        / dist
    )
    return amp * np.exp((1j * 2.0 * np.pi / cfg.wavelength - 0.5 * cfg.kappa_abs) * dist)


def channel_vector(cfg: RadioConfig, geom: DmaGeometry, ue: UePosition) -> NearFieldChannel:
    """Channel vector for one user; entry k is alpha_k * exp(j 2 pi d_k / lambda)."""
    h = channel_matrix(cfg, geom, np.array([ue.r, ue.theta, ue.phi]))
    return NearFieldChannel(h=h)


def channel_derivatives(cfg: RadioConfig, geom: DmaGeometry, ue: UePosition) -> NearFieldChannel:
    """Channel vector plus analytic derivatives in (r, theta, phi).

    Applies the full chain rule through the distance phase, the 1/d and
    absorption amplitude factors, and the radiation profile at the
    per-element elevation. The elevation's |z-offset| uses d|x|/dx = sign(x)
    with sign(0) = 0; entries within KINK_EPSILON of that kink, or at the
    grazing-incidence boundary, are flagged in ``kink_mask``.
    """
    pos = np.array([ue.r, ue.theta, ue.phi])
    dx, dy, dz, dist, z_off, q = _geometry_terms(geom, pos)
    if np.any(dist < 1e-12):
        raise DegenerateGeometryError(f"user at {ue} coincides with a panel element")

    q = np.clip(q, 0.0, 1.0)
    wavenum = 2.0 * np.pi / cfg.wavelength
    h = _entries_from(cfg, dist, q)

    st, ct = np.sin(ue.theta), np.cos(ue.theta)
    sp, cp = np.sin(ue.phi), np.cos(ue.phi)

    # d(user cartesian)/d(r, theta, phi)
    du = {
        "r": (st * cp, st * sp, ct),
        "theta": (ue.r * ct * cp, ue.r * ct * sp, -ue.r * st),
        "phi": (-ue.r * st * sp, ue.r * st * cp, 0.0),
    }
    # d(z_off)/d zeta = -d(uz)/d zeta
    dz_off = {"r": -ct, "theta": ue.r * st, "phi": 0.0}

    sign = np.sign(z_off)
    one_minus_q2 = np.maximum(1.0 - q * q, 1e-30)
    kink = np.abs(z_off) < KINK_EPSILON
    grazing = q > 1.0 - 1e-12

    derivs = {}
    for name in ("r", "theta", "phi"):
        gx, gy, gz = du[name]
        ddist = (dx * gx + dy * gy + dz * gz) / dist
        dq = (sign * dz_off[name] * dist - np.abs(z_off) * ddist) / (dist * dist)
        # radiation-profile term: F'/2F * d(elev) = -(b/2) q dq / (1 - q^2)
        profile_term = -(cfg.b_gain / 2.0) * q * dq / one_minus_q2
        radial_term = (1j * wavenum - 1.0 / dist - 0.5 * cfg.kappa_abs) * ddist
        derivs[name] = h * (profile_term + radial_term)

    return NearFieldChannel(
        h=h,
        dh_dr=derivs["r"],
        dh_dtheta=derivs["theta"],
        dh_dphi=derivs["phi"],
        kink_mask=kink | grazing,
    )
