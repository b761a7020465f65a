"""Fisher information, Cramér-Rao bound, and position error bound.

The observation model is Gaussian with a parameter-independent covariance,
so the information about the stacked user parameters
[r_1, theta_1, phi_1, ..., r_U, theta_U, phi_U] flows entirely through the
derivative of the received mean. Pilot energy enters as an exact scalar
factor: the 3U x 3U matrix is assembled once at unit transmit power and
scaled, which keeps the 1/P law of the bound exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import NearFieldChannel, PropagationMatrix
from .codebook import AnalogBeamformer
from .exceptions import SingularCovarianceError, UnidentifiableConfigurationError

PARAM_NAMES = ("r", "theta", "phi")

DEFAULT_CONDITION_CAP = 1e12


@dataclass(frozen=True)
class PilotBlock:
    """Known pilot sequences, one length-T row per user.

    ``s_unit`` holds unit-power symbols; the transmitted sequence is
    sqrt(p_max_mw) * s_unit, so every sample meets the per-sample power
    budget with equality. In orthogonal mode the rows are DFT rows, whose
    Gram matrix is T * I by construction.
    """

    s_unit: np.ndarray
    p_max_mw: float
    mode: str = "orthogonal"

    def __post_init__(self):
        if self.p_max_mw <= 0:
            raise ValueError("pilot power must be positive")
        u, t = self.s_unit.shape
        if self.mode == "orthogonal" and t < u:
            raise ValueError(f"orthogonal pilots need T >= U, got T={t}, U={u}")

    @property
    def n_ue(self) -> int:
        return self.s_unit.shape[0]

    @property
    def n_samples(self) -> int:
        return self.s_unit.shape[1]

    @property
    def s(self) -> np.ndarray:
        """Transmitted pilot matrix (U, T) at full power."""
        return np.sqrt(self.p_max_mw) * self.s_unit

    def gram_unit(self) -> np.ndarray:
        """U x U matrix of sum_t s_u*(t) s_v(t) at unit power.

        Exact T * I in orthogonal mode (the defining property of the DFT
        rows), numeric otherwise.
        """
        if self.mode == "orthogonal":
            return self.n_samples * np.eye(self.n_ue, dtype=complex)
        return self.s_unit.conj() @ self.s_unit.T

    def gram(self) -> np.ndarray:
        return self.p_max_mw * self.gram_unit()

    @classmethod
    def orthogonal(cls, n_ue: int, n_samples: int, p_max_mw: float) -> "PilotBlock":
        if n_samples < n_ue:
            raise ValueError(f"orthogonal pilots need T >= U, got T={n_samples}, U={n_ue}")
        t = np.arange(n_samples)
        rows = np.exp(2j * np.pi * np.outer(np.arange(n_ue), t) / n_samples)
        return cls(s_unit=rows, p_max_mw=p_max_mw, mode="orthogonal")

    @classmethod
    def random_qpsk(cls, n_ue: int, n_samples: int, p_max_mw: float, seed: int) -> "PilotBlock":
        rng = np.random.default_rng(seed)
        symbols = rng.integers(0, 4, size=(n_ue, n_samples))
        rows = np.exp(1j * (np.pi / 4 + np.pi / 2 * symbols))
        return cls(s_unit=rows, p_max_mw=p_max_mw, mode="random-qpsk")


@dataclass
class FimResult:
    """Fisher matrix for the stacked user parameters plus derived bounds.

    ``crb`` is the trace of the inverse (infinite when the matrix is not
    positive definite), ``peb`` its square root, and ``trace_bound`` the
    harmonic-mean lower bound dim^2 / trace, which can never exceed ``crb``.
    Units are mixed (meters and radians share the trace).
    """

    fim: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    crb: float
    peb: float
    trace_bound: float
    condition: float
    n_ue: int

    @property
    def dim(self) -> int:
        return self.fim.shape[0]

    def per_param_crb(self) -> np.ndarray:
        """Diagonal of the inverse Fisher matrix, one variance bound per parameter."""
        inv_eig = 1.0 / self.eigenvalues
        return np.einsum("aj,j,aj->a", self.eigenvectors, inv_eig, self.eigenvectors)

    def param_labels(self) -> list:
        return [f"{name}_{u + 1}" for u in range(self.n_ue) for name in PARAM_NAMES]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, n_ue: Optional[int] = None) -> "FimResult":
        """Wrap an externally assembled symmetric matrix in the same diagnostics."""
        matrix = np.asarray(matrix, dtype=float)
        if n_ue is None:
            n_ue = max(matrix.shape[0] // 3, 1)
        return _finalize(matrix, n_ue)


def noise_covariance(
    bf: AnalogBeamformer, prop: PropagationMatrix, noise_power: float
) -> np.ndarray:
    """Diagonal of the RF-chain noise covariance, shape (N_RF,).

    Entry i is noise_power * ||w_i o p_i||^2 (o = elementwise product); the
    off-diagonal entries vanish because microstrips share no elements. A
    microstrip whose weighted propagation vector is identically zero would
    make the covariance singular and raises.
    """
    wp = bf.weights * prop.per_strip()
    diag = noise_power * np.sum(np.abs(wp) ** 2, axis=1)
    if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
        dark = int(np.argmin(diag))
        raise SingularCovarianceError(
            f"microstrip {dark} contributes no signal path (all-off weights); "
            "noise covariance is singular"
        )
    return diag


def _chain_projections(
    channels: Sequence[NearFieldChannel],
    bf: AnalogBeamformer,
    prop: PropagationMatrix,
    rdiag: np.ndarray,
    conjugate_model: bool,
) -> np.ndarray:
    """Whitened per-chain projections of every parameter derivative.

    Returns G with shape (N_RF, 3U); column (3u + z) is the projection of
    user u's derivative in parameter z onto the weighted microstrips,
    scaled by the inverse square root of the chain noise variance.
    """
    n_rf, n_e = bf.weights.shape
    wp = bf.weights * prop.per_strip()
    scale = 1.0 / np.sqrt(rdiag)
    cols = []
    for ch in channels:
        if not ch.has_derivatives:
            raise ValueError("Fisher assembly needs channels with derivatives populated")
        for name in PARAM_NAMES:
            d = ch.derivative(name).reshape(n_rf, n_e)
            raw = np.sum(wp * d, axis=1)
            cols.append((np.conj(raw) if conjugate_model else raw) * scale)
    return np.stack(cols, axis=1)


def fim_matrix(
    channels: Sequence[NearFieldChannel],
    bf: AnalogBeamformer,
    prop: PropagationMatrix,
    pilots: PilotBlock,
    noise_power: float,
    conjugate_model: bool = True,
) -> FimResult:
    """Assemble the 3U x 3U Fisher matrix for the given receive configuration.

    Entry (a, b), with a belonging to user u and b to user v, is
    2 Re{ (sum_t s_u*(t) s_v(t)) * g_a^H F g_b } where g projects the channel
    derivative through the waveguide and F whitens by the chain noise. With
    orthogonal pilots the cross-user blocks are exactly zero. The covariance
    does not depend on the positions, so no covariance-derivative term
    appears. ``conjugate_model`` selects between the two equivalent global
    conjugation conventions of the received-signal equation.
    """
    if len(channels) != pilots.n_ue:
        raise ValueError(
            f"got {len(channels)} channels for {pilots.n_ue} pilot sequences"
        )
    rdiag = noise_covariance(bf, prop, noise_power)
    g = _chain_projections(channels, bf, prop, rdiag, conjugate_model)

    gram = pilots.gram_unit()
    if not conjugate_model:
        gram = gram.conj()
    # expand the U x U pilot Gram onto the 3U parameter grid
    gram_exp = np.kron(gram, np.ones((3, 3)))
    core = 2.0 * np.real(gram_exp * (g.conj().T @ g))
    core = 0.5 * (core + core.T)  # exact symmetry
    fim = pilots.p_max_mw * core
    return _finalize(fim, pilots.n_ue, scale=pilots.p_max_mw, core=core)


def _finalize(
    fim: np.ndarray, n_ue: int, scale: float = 1.0, core: Optional[np.ndarray] = None
) -> FimResult:
    if core is None:
        core = fim
        scale = 1.0
    eigval_core, eigvec = np.linalg.eigh(core)
    eigenvalues = scale * eigval_core
    dim = fim.shape[0]
    if np.all(eigval_core > 0):
        crb = float(np.sum(1.0 / (scale * eigval_core)))
        condition = float(eigval_core[-1] / eigval_core[0])
    else:
        crb = float("inf")
        condition = float("inf")
    trace = float(np.trace(fim))
    bound = dim * dim / trace if trace > 0 else float("inf")
    return FimResult(
        fim=fim,
        eigenvalues=eigenvalues,
        eigenvectors=eigvec,
        crb=crb,
        peb=float(np.sqrt(crb)),
        trace_bound=bound,
        condition=condition,
        n_ue=n_ue,
    )


def peb(result: FimResult, condition_cap: float = DEFAULT_CONDITION_CAP) -> float:
    """Position error bound sqrt(Tr{FIM^-1}) with conditioning guard.

    Raises UnidentifiableConfigurationError when the Fisher matrix cannot be
    trusted to invert (condition number above the cap, or not positive
    definite), naming the parameter combination closest to the null space.
    """
    if not np.isfinite(result.condition) or result.condition > condition_cap:
        direction = result.eigenvectors[:, 0]
        labels = result.param_labels()
        worst = int(np.argmax(np.abs(direction)))
        raise UnidentifiableConfigurationError(
            "Fisher matrix is numerically singular "
            f"(condition {result.condition:.3e} > cap {condition_cap:.1e}); "
            f"the near-null direction is dominated by {labels[worst]}",
            direction=direction,
            condition=result.condition,
        )
    return result.peb


def trace_bound(result: FimResult) -> float:
    """Harmonic lower bound dim^2 / Tr{FIM} on the CRB trace.

    Equality holds exactly when all eigenvalues coincide.
    """
    trace = float(np.trace(result.fim))
    if trace <= 0:
        raise ValueError("Fisher matrix trace must be positive")
    return result.dim**2 / trace


def cartesian_peb(result: FimResult, ues) -> float:
    """PEB after mapping parameter variances to Cartesian coordinates.

    Convenience for plots on a single length scale; the headline bound keeps
    the mixed meter/radian units.
    """
    j = np.zeros((result.dim, result.dim))
    for u, ue in enumerate(ues):
        st, ct = np.sin(ue.theta), np.cos(ue.theta)
        sp, cp = np.sin(ue.phi), np.cos(ue.phi)
        block = np.array(
            [
                [st * cp, ue.r * ct * cp, -ue.r * st * sp],
                [st * sp, ue.r * ct * sp, ue.r * st * cp],
                [ct, -ue.r * st, 0.0],
            ]
        )
        j[3 * u : 3 * u + 3, 3 * u : 3 * u + 3] = block
    inv_eig = 1.0 / result.eigenvalues
    fim_inv = (result.eigenvectors * inv_eig) @ result.eigenvectors.T
    return float(np.sqrt(np.trace(j @ fim_inv @ j.T)))
