"""Panel layout and user-to-element trigonometry.

The receive panel sits in the xz-plane with the first microstrip anchored at
the origin. Microstrips advance along +x with pitch ``d_rf``; the metamaterial
elements of each microstrip advance along +z with pitch ``d_e``. User
positions are spherical ``(r, theta, phi)`` about the panel origin, where
``theta`` is the polar angle from +z and ``phi`` the azimuth in the xy-plane.

Indexing is 1-based ``(i, n)`` at the API surface (microstrip ``i``, element
``n`` within it) and 0-based flat ``k = (i-1)*n_e + (n-1)`` internally, so
that flattened vectors enumerate elements microstrip by microstrip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError

# Minimum user-to-element distance treated as non-degenerate, in meters.
MIN_DISTANCE = 1e-12


@dataclass(frozen=True)
class DmaGeometry:
    """Dynamic metasurface panel: microstrip count, element grid, waveguide constants.

    Attributes:
        n_rf: number of microstrips (one RF chain each).
        n_e: metamaterial elements per microstrip.
        d_rf: inter-microstrip spacing along x, meters.
        d_e: inter-element spacing along z, meters.
        alpha_wg: waveguide attenuation coefficient, 1/m (0 = lossless).
        beta_wg: in-guide wavenumber, rad/m (0 disables in-guide phase).
    """

    n_rf: int
    n_e: int
    d_rf: float
    d_e: float
    alpha_wg: float = 0.0
    beta_wg: float = 0.0

    def __post_init__(self):
        if self.n_rf < 1 or self.n_e < 1:
            raise ValueError(f"need n_rf >= 1 and n_e >= 1, got {self.n_rf}, {self.n_e}")
        if self.d_rf <= 0 or self.d_e <= 0:
            raise ValueError("element spacings must be positive")
        if self.alpha_wg < 0:
            raise ValueError("waveguide attenuation must be nonnegative")

    @property
    def n_elements(self) -> int:
        """Total metamaterial count across the panel."""
        return self.n_rf * self.n_e

    @property
    def diagonal_length(self) -> float:
        """Panel diagonal in meters (corner element to corner element)."""
        return float(np.hypot((self.n_rf - 1) * self.d_rf, (self.n_e - 1) * self.d_e))


@dataclass(frozen=True)
class UePosition:
    """User position in spherical coordinates about the panel origin.

    ``r`` in meters (> 0), ``theta`` in [0, pi], ``phi`` in (-pi, pi],
    both in radians.
    """

    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"range must be positive, got {self.r}")
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not -np.pi < self.phi <= np.pi:
            raise ValueError(f"phi must lie in (-pi, pi], got {self.phi}")

    @classmethod
    def from_degrees(cls, r: float, theta_deg: float, phi_deg: float) -> "UePosition":
        return cls(r, float(np.deg2rad(theta_deg)), float(np.deg2rad(phi_deg)))

    @property
    def cartesian(self) -> np.ndarray:
        """(x, y, z) in meters."""
        return spherical_to_cartesian(self.r, self.theta, self.phi)


@dataclass(frozen=True)
class ElementIndex:
    """1-based (microstrip, element) pair."""

    i: int
    n: int

    def __post_init__(self):
        if self.i < 1 or self.n < 1:
            raise ValueError(f"indices are 1-based, got (i={self.i}, n={self.n})")

    def validate(self, geom: DmaGeometry) -> None:
        if self.i > geom.n_rf or self.n > geom.n_e:
            raise IndexError(
                f"element (i={self.i}, n={self.n}) outside a "
                f"{geom.n_rf}x{geom.n_e} panel"
            )

    def flat(self, geom: DmaGeometry) -> int:
        """0-based flat index k = (i-1)*n_e + (n-1)."""
        self.validate(geom)
        return (self.i - 1) * geom.n_e + (self.n - 1)


def spherical_to_cartesian(r, theta, phi) -> np.ndarray:
    """Map (r, theta, phi) to (x, y, z); broadcasts over array inputs."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(r * st * np.cos(phi), r * st * np.sin(phi), r * np.cos(theta)),
        axis=-1,
    )


def element_positions(geom: DmaGeometry) -> np.ndarray:
    """Cartesian positions of all elements, shape (N, 3), in flat-index order."""
    i = np.repeat(np.arange(geom.n_rf), geom.n_e)
    n = np.tile(np.arange(geom.n_e), geom.n_rf)
    out = np.zeros((geom.n_elements, 3))
    out[:, 0] = i * geom.d_rf
    out[:, 2] = n * geom.d_e
    return out


def element_position(geom: DmaGeometry, idx: ElementIndex) -> np.ndarray:
    """Cartesian position of one element: ((i-1) d_rf, 0, (n-1) d_e)."""
    idx.validate(geom)
    return np.array([(idx.i - 1) * geom.d_rf, 0.0, (idx.n - 1) * geom.d_e])


def waveguide_arc_lengths(geom: DmaGeometry) -> np.ndarray:
    """Arc position of each element along its microstrip, shape (N,).

    Element n sits (n-1)*d_e from the feed, identical for every microstrip.
    """
    return np.tile(np.arange(geom.n_e) * geom.d_e, geom.n_rf)


def distances_to_points(geom: DmaGeometry, points: np.ndarray) -> np.ndarray:
    """Euclidean distances from Cartesian points (..., 3) to all elements.

    Returns shape (..., N).
    """
    pts = np.asarray(points, dtype=float)
    diff = pts[..., None, :] - element_positions(geom)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def ue_element_distances(geom: DmaGeometry, ue: UePosition) -> np.ndarray:
    """Distances from one user to every element, shape (N,)."""
    return distances_to_points(geom, ue.cartesian)


def ue_element_distance(geom: DmaGeometry, ue: UePosition, idx: ElementIndex) -> float:
    """Distance from the user to element (i, n).

    Equals the Euclidean distance between the user's Cartesian point and
    ((i-1) d_rf, 0, (n-1) d_e); collapses to ``ue.r`` at the origin element.
    """
    idx.validate(geom)
    diff = ue.cartesian - element_position(geom, idx)
    return float(np.sqrt(np.dot(diff, diff)))


def ue_element_elevations(geom: DmaGeometry, ue: UePosition) -> np.ndarray:
    """Per-element elevation of the user seen from each element, shape (N,).

    asin(|z_element - z_user| / distance), in [0, pi/2]. Raises
    DegenerateGeometryError if the user coincides with an element.
    """
    dist = ue_element_distances(geom, ue)
    if np.any(dist < MIN_DISTANCE):
        k = int(np.argmin(dist))
        raise DegenerateGeometryError(
            f"user at {ue} coincides with element flat index {k}"
        )
    z_off = np.abs(element_positions(geom)[:, 2] - ue.r * np.cos(ue.theta))
    # |z offset| <= hypotenuse; clip shields asin from roundoff overshoot.
    return np.arcsin(np.clip(z_off / dist, 0.0, 1.0))


def ue_element_elevation(geom: DmaGeometry, ue: UePosition, idx: ElementIndex) -> float:
    """Elevation of the user relative to element (i, n), in [0, pi/2]."""
    dist = ue_element_distance(geom, ue, idx)
    if dist < MIN_DISTANCE:
        raise DegenerateGeometryError(
            f"user at {ue} coincides with element (i={idx.i}, n={idx.n})"
        )
    z_off = abs((idx.n - 1) * geom.d_e - ue.r * np.cos(ue.theta))
    return float(np.arcsin(min(z_off / dist, 1.0)))
