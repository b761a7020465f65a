"""Pilot reception, grid maximum-likelihood position estimation, and scoring.

Reception stacks the per-user noiseless chain signatures against the pilot
matrix and adds waveguide-filtered white Gaussian noise. With orthogonal
pilots each user decouples through a matched filter, and the position
estimate is the grid cell whose whitened signature correlates best with the
filtered observation. All randomness flows through explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .channel import (
    NearFieldChannel,
    PropagationMatrix,
    RadioConfig,
    channel_matrix,
    channel_vector,
    dbm_to_mw,
    propagation_matrix,
)
from .codebook import AnalogBeamformer
from .exceptions import DegenerateGeometryError
from .fim import PilotBlock, noise_covariance
from .geometry import DmaGeometry, UePosition, spherical_to_cartesian

# Fixed stream tags so child seeds never collide across purposes.
STREAM_RX_NOISE = 1
STREAM_ERROR_MAP = 2


def _seed_key(seed, tag: int) -> list:
    """Flatten a master seed or (master, *stream) tuple plus a purpose tag."""
    if isinstance(seed, (tuple, list)):
        return [*seed, tag]
    return [seed, tag]


@dataclass(frozen=True)
class EstimationGrid:
    """Search grid of candidate positions: ranges x azimuths (x elevations).

    Axes must be strictly increasing and nonempty. The elevation axis
    defaults to a single known value; passing several enables full
    three-parameter search.
    """

    ranges: np.ndarray
    azimuths: np.ndarray
    elevations: np.ndarray

    def __post_init__(self):
        for name in ("ranges", "azimuths", "elevations"):
            axis = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, axis)
            if axis.size == 0:
                raise ValueError(f"grid axis {name} is empty")
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise ValueError(f"grid axis {name} must be strictly increasing")

    @classmethod
    def regular(
        cls,
        r_start: float = 1.0,
        r_stop: float = 12.0,
        r_step: float = 0.25,
        phi_start_deg: float = 1.0,
        phi_stop_deg: float = 90.0,
        phi_step_deg: float = 1.0,
        theta_deg: float = 30.0,
    ) -> "EstimationGrid":
        ranges = np.arange(r_start, r_stop + 0.5 * r_step, r_step)
        phis = np.deg2rad(
            np.arange(phi_start_deg, phi_stop_deg + 0.5 * phi_step_deg, phi_step_deg)
        )
        return cls(ranges=ranges, azimuths=phis, elevations=np.array([np.deg2rad(theta_deg)]))

    @property
    def shape(self) -> tuple:
        return (self.elevations.size, self.ranges.size, self.azimuths.size)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    def cells(self) -> np.ndarray:
        """All candidate positions as (r, theta, phi) rows, shape (C, 3)."""
        t, r, p = np.meshgrid(self.elevations, self.ranges, self.azimuths, indexing="ij")
        return np.stack([r.ravel(), t.ravel(), p.ravel()], axis=1)

    def coarsened(self, r_factor: int = 4, phi_factor: int = 5) -> "EstimationGrid":
        """Subsampled grid for the initial coarse search."""
        return EstimationGrid(
            ranges=self.ranges[:: max(1, r_factor)],
            azimuths=self.azimuths[:: max(1, phi_factor)],
            elevations=self.elevations,
        )


@dataclass
class CellSignatures:
    """Precomputed noiseless chain signatures of every grid cell, (C, N_RF)."""

    mu: np.ndarray
    cells: np.ndarray
    grid: EstimationGrid


@dataclass
class ReceivedBlock:
    """Chain-output observations (N_RF x T) plus the context that produced them."""

    y: np.ndarray
    seed: Optional[int | tuple]
    radio: Optional[RadioConfig] = None
    geom: Optional[DmaGeometry] = None
    conjugate_model: bool = True


@dataclass
class LocalizationResult:
    """Per-user position estimates with optional errors and statistic surfaces."""

    estimates: list
    errors: Optional[np.ndarray] = None
    surfaces: Optional[np.ndarray] = None
    skipped_cells: int = 0


def cartesian_error(estimate: UePosition, truth: UePosition) -> float:
    """Euclidean distance between two spherical positions, meters."""
    return float(np.linalg.norm(estimate.cartesian - truth.cartesian))


def _project_chains(
    vectors: np.ndarray, bf: AnalogBeamformer, prop: PropagationMatrix, conjugate_model: bool
) -> np.ndarray:
    """Map element-domain vectors (..., N) to chain signatures (..., N_RF)."""
    wp = bf.weights * prop.per_strip()
    shaped = vectors.reshape(vectors.shape[:-1] + (prop.n_rf, prop.n_e))
    out = np.einsum("...in,in->...i", shaped, wp)
    return np.conj(out) if conjugate_model else out


def cell_signatures(
    radio: RadioConfig,
    geom: DmaGeometry,
    prop: PropagationMatrix,
    bf: AnalogBeamformer,
    grid: EstimationGrid,
    conjugate_model: bool = True,
) -> CellSignatures:
    """Noiseless chain response of a hypothetical user at every grid cell."""
    cells = grid.cells()
    h = channel_matrix(radio, geom, cells)
    mu = _project_chains(h, bf, prop, conjugate_model)
    return CellSignatures(mu=mu, cells=cells, grid=grid)


def synthesize_rx(
    channels: Sequence[NearFieldChannel],
    bf: AnalogBeamformer,
    prop: PropagationMatrix,
    pilots: PilotBlock,
    noise_power: float,
    seed: Optional[int | tuple],
    radio: Optional[RadioConfig] = None,
    geom: Optional[DmaGeometry] = None,
    conjugate_model: bool = True,
) -> ReceivedBlock:
    """Simulate one pilot block at the RF-chain outputs.

    The noiseless part is the pilot-weighted sum of the users' chain
    signatures; the noise is i.i.d. circular Gaussian of variance
    ``noise_power`` per element, filtered by the same weighted waveguide
    path as the signal. Deterministic for a fixed seed.
    """
    if len(channels) != pilots.n_ue:
        raise ValueError(f"{len(channels)} channels for {pilots.n_ue} pilot rows")
    h_mat = np.stack([ch.h for ch in channels], axis=0)  # (U, N)
    mu = _project_chains(h_mat, bf, prop, conjugate_model).T  # (N_RF, U)
    s = pilots.s
    mean = mu @ (s if conjugate_model else s.conj())

    rng = np.random.default_rng(None if seed is None else _seed_key(seed, STREAM_RX_NOISE))
    n_elems = bf.n_rf * bf.n_e
    t = pilots.n_samples
    noise = np.sqrt(noise_power / 2.0) * (
        rng.standard_normal((n_elems, t)) + 1j * rng.standard_normal((n_elems, t))
    )
    filtered = _project_chains(noise.T, bf, prop, conjugate_model).T
    return ReceivedBlock(
        y=mean + filtered,
        seed=seed,
        radio=radio,
        geom=geom,
        conjugate_model=conjugate_model,
    )


def _whitened_statistic(mu: np.ndarray, yhat: np.ndarray, rdiag: np.ndarray, kind: str):
    """Per-cell grid statistic for the matched-filtered observation.

    "amplitude" (default) is the exact likelihood under a single unknown
    global phase: 2 |yhat^H R^-1 mu| - mu^H R^-1 mu, normalized by
    yhat^H R^-1 yhat so the surface is invariant to common rescaling. It
    exploits the known channel magnitude but not the absolute carrier phase
    (meter-scale ranges make that unusable in practice).

    "correlation" is the fully gain-blind variant
    |yhat^H R^-1 mu|^2 / (mu^H R^-1 mu), insensitive to any complex scaling
    of the cell signature.
    """
    weighted = mu / rdiag  # (C, N_RF)
    den = np.real(np.sum(weighted * mu.conj(), axis=1))
    dead = den <= 0
    cross = np.abs(weighted @ yhat.conj())
    with np.errstate(invalid="ignore", divide="ignore"):
        if kind == "correlation":
            stat = cross**2 / np.where(dead, 1.0, den)
        elif kind == "amplitude":
            scale = float(np.real(np.sum(np.abs(yhat) ** 2 / rdiag)))
            stat = (2.0 * cross - den) / max(scale, 1e-300)
        else:
            raise ValueError(f"unknown statistic {kind!r}")
    return np.where(dead, -np.inf, stat), int(np.count_nonzero(dead))


def mle_estimate(
    received: ReceivedBlock,
    bf: AnalogBeamformer,
    prop: PropagationMatrix,
    pilots: PilotBlock,
    grid: EstimationGrid,
    signatures: Optional[CellSignatures] = None,
    truth: Optional[Sequence[UePosition]] = None,
    statistic: str = "amplitude",
    polish: bool = False,
    keep_surfaces: bool = False,
) -> LocalizationResult:
    """Grid maximum-likelihood estimate for every user.

    Orthogonal pilots let each user be matched-filtered out of the block;
    the estimate is the grid cell maximizing the whitened statistic against
    the cell's noiseless signature (see ``_whitened_statistic`` for the two
    variants). ``polish`` refines the winning cell with a bounded
    derivative-free search (off by default so results stay on the grid).
    Cells with vanishing signature are skipped and counted.
    """
    if received.radio is None or received.geom is None:
        if signatures is None:
            raise ValueError("need either precomputed signatures or a block carrying radio+geom")
    if signatures is None:
        signatures = cell_signatures(
            received.radio, received.geom, prop, bf, grid, received.conjugate_model
        )
    rdiag = noise_covariance(bf, prop, received.radio.noise_power)
    energy = pilots.n_samples * pilots.p_max_mw
    s = pilots.s if received.conjugate_model else pilots.s.conj()
    yhat = received.y @ s.conj().T / energy  # (N_RF, U)

    estimates = []
    surfaces = np.empty((pilots.n_ue, signatures.mu.shape[0])) if keep_surfaces else None
    skipped = 0
    for u in range(pilots.n_ue):
        stat, dead = _whitened_statistic(signatures.mu, yhat[:, u], rdiag, statistic)
        skipped += dead
        best = int(np.argmax(stat))
        r, theta, phi = signatures.cells[best]
        if polish:
            r, theta, phi = _polish_cell(
                received, bf, prop, rdiag, yhat[:, u], grid, (r, theta, phi), statistic
            )
        estimates.append(UePosition(float(r), float(theta), float(phi)))
        if keep_surfaces:
            surfaces[u] = stat
    errors = None
    if truth is not None:
        if len(truth) != len(estimates):
            raise ValueError("truth length does not match the estimates")
        errors = np.array([cartesian_error(e, t) for e, t in zip(estimates, truth)])
    return LocalizationResult(
        estimates=estimates, errors=errors, surfaces=surfaces, skipped_cells=skipped
    )


def _polish_cell(received, bf, prop, rdiag, yhat_u, grid, start, statistic):
    """Bounded Nelder-Mead refinement of (r, phi) inside the winning cell."""
    r0, theta, phi0 = start
    r_step = np.min(np.diff(grid.ranges)) if grid.ranges.size > 1 else 0.0
    p_step = np.min(np.diff(grid.azimuths)) if grid.azimuths.size > 1 else 0.0
    if r_step == 0.0 and p_step == 0.0:
        return r0, theta, phi0
    lo = [max(grid.ranges[0], r0 - r_step / 2), max(grid.azimuths[0], phi0 - p_step / 2)]
    hi = [min(grid.ranges[-1], r0 + r_step / 2), min(grid.azimuths[-1], phi0 + p_step / 2)]

    def negstat(x):
        h = channel_matrix(received.radio, received.geom, np.array([x[0], theta, x[1]]))
        mu = _project_chains(h[None, :], bf, prop, received.conjugate_model)
        stat, _ = _whitened_statistic(mu, yhat_u, rdiag, statistic)
        return -stat[0]

    res = minimize(
        negstat,
        x0=[r0, phi0],
        method="Nelder-Mead",
        bounds=list(zip(lo, hi)),
        options={"xatol": 1e-6, "fatol": 1e-12, "maxiter": 200},
    )
    return float(res.x[0]), theta, float(res.x[1])


def rmse(results: Sequence[LocalizationResult], truth: Sequence[UePosition]) -> float:
    """Root mean squared Cartesian error over trials and users, meters."""
    if len(results) == 0:
        raise ValueError("need at least one trial")
    sq = []
    for res in results:
        if len(res.estimates) != len(truth):
            raise ValueError("result/truth user counts differ")
        for est, tru in zip(res.estimates, truth):
            sq.append(cartesian_error(est, tru) ** 2)
    return float(np.sqrt(np.mean(sq)))


@dataclass
class ErrorMapResult:
    """Cartesian estimation error for a hypothetical user at every grid cell."""

    errors: np.ndarray  # (n_ranges, n_azimuths)
    grid: EstimationGrid
    seed: int


def error_map(
    scenario, bf: AnalogBeamformer, grid: EstimationGrid, seed: Optional[int] = None
) -> ErrorMapResult:
    """Sweep a single hypothetical user over the grid and score the estimates.

    The beamformer stays fixed (it was designed for the scenario's true
    users); each cell gets fresh noise from its own child seed, one pilot
    sequence, and a full grid search, so the surface shows where the fixed
    design keeps the estimator accurate. Cells with a degenerate channel
    are left NaN. Requires a single-elevation grid.
    """
    if grid.elevations.size != 1:
        raise ValueError("error maps are defined over a single elevation")
    radio, geom = scenario.radio, scenario.geom
    prop = propagation_matrix(geom)
    master = scenario.master_seed if seed is None else seed
    pilots = PilotBlock.orthogonal(1, scenario.pilots.t, dbm_to_mw(scenario.pilots.p_max_dbm))
    sigs = cell_signatures(radio, geom, prop, bf, grid)
    errors = np.full(grid.n_cells, np.nan)
    for c, (r, theta, phi) in enumerate(sigs.cells):
        ue = UePosition(float(r), float(theta), float(phi))
        try:
            ch = channel_vector(radio, geom, ue)
        except DegenerateGeometryError:
            continue
        block = synthesize_rx(
            [ch],
            bf,
            prop,
            pilots,
            radio.noise_power,
            seed=(master, STREAM_ERROR_MAP, c),
            radio=radio,
            geom=geom,
        )
        res = mle_estimate(block, bf, prop, pilots, grid, signatures=sigs, truth=[ue])
        errors[c] = res.errors[0]
    return ErrorMapResult(errors=errors.reshape(grid.shape)[0], grid=grid, seed=master)
