"""Discrete analog-weight design maximizing the Fisher-information trace.

The information objective separates across microstrips into Rayleigh
quotients of Hermitian PSD blocks Q_i built from the waveguide-projected
channel derivatives. Q has rank at most 3U, so blocks are kept in factored
form (N x 3U) and quotients are evaluated through the factor instead of
densifying N_E x N_E matrices.

Solvers: per-block principal-eigenvector projection onto the codebook,
randomized greedy replacement, exact per-block scan (global optimum when
codeword reuse is allowed), exact assignment (optimum under all-distinct
codewords), an SNR-maximizing baseline, and uniform random selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import NearFieldChannel, PropagationMatrix
from .codebook import AnalogBeamformer, VectorCodebook
from .exceptions import InfeasibleSearchError

EIGEN_TIE_REL = 1e-12

SOLVER_NAMES = ("projection", "greedy", "exhaustive", "assignment", "random", "snr_max")


@dataclass
class ObjectiveMatrix:
    """Factored information objective Q = factor @ factor^H.

    ``factor`` has shape (N, 3U): columns are the waveguide-projected
    conjugate channel derivatives in (r, theta, phi) per user. Per-microstrip
    blocks are contiguous row slices of the factor.
    """

    factor: np.ndarray
    n_rf: int
    n_e: int
    metadata: dict = field(default_factory=dict)

    def block_factor(self, i: int) -> np.ndarray:
        return self.factor[i * self.n_e : (i + 1) * self.n_e]

    def block_dense(self, i: int) -> np.ndarray:
        a = self.block_factor(i)
        return a @ a.conj().T

    def dense(self) -> np.ndarray:
        """Full N x N matrix; only sensible for small panels."""
        return self.factor @ self.factor.conj().T

    def quotient(self, i: int, w: np.ndarray) -> float:
        """Rayleigh quotient w^H Q_i w / ||w||^2 of block i."""
        a = self.block_factor(i)
        proj = a.conj().T @ w
        return float(np.real(np.vdot(proj, proj) / np.vdot(w, w)))

    def benefit_matrix(self, cb: VectorCodebook) -> np.ndarray:
        """Quotients of every codeword on every block, shape (N_RF, N_W)."""
        norms = np.sum(np.abs(cb.vectors) ** 2, axis=1)
        out = np.empty((self.n_rf, len(cb)))
        for i in range(self.n_rf):
            proj = cb.vectors.conj() @ self.block_factor(i)  # (N_W, 3U)
            out[i] = np.sum(np.abs(proj) ** 2, axis=1) / norms
        return out

    def top_eig(self, i: int):
        """Principal eigenpair of block i via the thin SVD of its factor.

        Returns (eigenvalue, unit eigenvector, gap to the next eigenvalue).
        """
        a = self.block_factor(i)
        u, s, _ = np.linalg.svd(a, full_matrices=False)
        lam = float(s[0] ** 2) if s.size else 0.0
        vec = _fix_phase(u[:, 0]) if s.size else _canonical_vector(a.shape[0])
        gap = float(s[0] ** 2 - s[1] ** 2) if s.size > 1 else lam
        return lam, vec, gap


def _canonical_vector(n: int) -> np.ndarray:
    v = np.zeros(n, dtype=complex)
    v[0] = 1.0
    return v


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a unit vector so its first significant entry is real positive."""
    mags = np.abs(v)
    nz = np.nonzero(mags > 1e-12 * mags.max())[0]
    if nz.size == 0:
        return v
    return v * np.exp(-1j * np.angle(v[nz[0]]))


def objective_matrix(
    channels: Sequence[NearFieldChannel],
    prop: PropagationMatrix,
    pilot_energy: Optional[float] = None,
    noise_power: Optional[float] = None,
) -> ObjectiveMatrix:
    """Assemble the factored objective from per-user channel derivatives.

    The pilot-energy scalar and the noise power are argmax-invariant and
    factored out of the matrix; they are recorded in the metadata so the
    exact information trace can be reconstructed.
    """
    cols = []
    p_conj = prop.diag.conj()
    for ch in channels:
        if not ch.has_derivatives:
            raise ValueError("objective assembly needs channel derivatives")
        for name in ("r", "theta", "phi"):
            cols.append(p_conj * ch.derivative(name).conj())
    factor = np.stack(cols, axis=1)
    return ObjectiveMatrix(
        factor=factor,
        n_rf=prop.n_rf,
        n_e=prop.n_e,
        metadata={"pilot_energy": pilot_energy, "noise_power": noise_power},
    )


def rayleigh_opt(block: np.ndarray):
    """Principal eigenpair of a dense Hermitian block.

    Returns (eigenvalue, unit eigenvector, gap). The eigenvector phase is
    fixed deterministically (first significant entry real positive); a
    degenerate top eigenvalue is resolved by that same rule.
    """
    block = np.asarray(block)
    vals, vecs = np.linalg.eigh(block)
    lam = float(vals[-1])
    gap = float(vals[-1] - vals[-2]) if vals.size > 1 else lam
    return lam, _fix_phase(vecs[:, -1]), gap


def lorentzian_lift(q_vec: np.ndarray) -> np.ndarray:
    """Map a unit vector onto the Lorentzian circle: 0.5 (j 1 + q)."""
    return 0.5 * (1j * np.ones_like(q_vec) + q_vec)


def codebook_distance(w: np.ndarray, w_bar: np.ndarray) -> float:
    """Alignment distance sqrt(1 - |w^H w_bar| / (||w|| ||w_bar||)) in [0, 1].

    Zero for globally phase-rotated copies, one for orthogonal vectors.
    """
    nw = np.linalg.norm(w)
    nb = np.linalg.norm(w_bar)
    if nw == 0 or nb == 0:
        raise ValueError("codebook distance needs nonzero vectors")
    return float(np.sqrt(max(0.0, 1.0 - np.abs(np.vdot(w, w_bar)) / (nw * nb))))


@dataclass
class BeamformerSolution:
    """Designed analog weights plus the achieved objective and solver metadata."""

    beamformer: AnalogBeamformer
    objective: float
    solver: str
    per_strip_quotients: np.ndarray
    codeword_indices: Optional[np.ndarray] = None
    seed: Optional[int] = None
    distinct: Optional[bool] = None
    diagnostics: dict = field(default_factory=dict)


def _solution_from_indices(
    q: ObjectiveMatrix,
    cb: VectorCodebook,
    indices: np.ndarray,
    solver: str,
    benefit: Optional[np.ndarray] = None,
    **kwargs,
) -> BeamformerSolution:
    indices = np.asarray(indices, dtype=int)
    if benefit is not None:
        quotients = benefit[np.arange(q.n_rf), indices]
    else:
        quotients = np.array(
            [q.quotient(i, cb.vectors[indices[i]]) for i in range(q.n_rf)]
        )
    return BeamformerSolution(
        beamformer=AnalogBeamformer.from_codebook(cb, indices),
        objective=float(np.sum(quotients)),
        solver=solver,
        per_strip_quotients=quotients,
        codeword_indices=indices,
        **kwargs,
    )


def solve_projection(
    q: ObjectiveMatrix, cb: VectorCodebook, distinct: bool = False
) -> BeamformerSolution:
    """Per-block principal eigenvector, lifted and projected onto the codebook.

    For each microstrip the unconstrained optimum q_i is lifted onto the
    Lorentzian circle (skipped for unit-modulus codebooks, where q_i itself
    is the reference) and the codeword at minimum alignment distance is
    selected by linear scan, ties to the lowest index. With ``distinct`` the
    per-block scans are replaced by a minimum-total-distance assignment.
    """
    if len(cb) == 0:
        raise ValueError("codebook must be nonempty")
    dist = np.empty((q.n_rf, len(cb)))
    eigvals = np.empty(q.n_rf)
    gaps = np.empty(q.n_rf)
    norms = np.linalg.norm(cb.vectors, axis=1)
    for i in range(q.n_rf):
        lam, vec, gap = q.top_eig(i)
        eigvals[i] = lam
        gaps[i] = gap
        cand = lorentzian_lift(vec) if cb.kind == "lorentzian" else vec
        align = np.abs(cb.vectors.conj() @ cand) / (norms * np.linalg.norm(cand))
        dist[i] = np.sqrt(np.clip(1.0 - align, 0.0, None))
    if distinct:
        if len(cb) < q.n_rf:
            raise InfeasibleSearchError(
                f"distinct selection needs at least {q.n_rf} codewords, have {len(cb)}"
            )
        rows, cols = linear_sum_assignment(dist)
        indices = cols[np.argsort(rows)]
    else:
        indices = np.argmin(dist, axis=1)
    return _solution_from_indices(
        q,
        cb,
        indices,
        "projection",
        distinct=distinct,
        diagnostics={
            "unconstrained_eigenvalues": eigvals,
            "eigen_gaps": gaps,
            "eigen_ties": gaps <= EIGEN_TIE_REL * np.maximum(eigvals, 1e-300),
            "selected_distances": dist[np.arange(q.n_rf), indices],
        },
    )


def solve_greedy(
    q: ObjectiveMatrix, cb: VectorCodebook, seed: int, distinct: bool = True
) -> BeamformerSolution:
    """Randomized greedy replacement until the codebook pool is exhausted.

    Starts from a random selection, then draws unused codewords in random
    order; each draw is tested as a replacement for every microstrip and the
    single replacement with the largest positive objective gain is committed.
    With ``distinct`` a draw cannot duplicate a codeword already in use. When
    there are fewer codewords than microstrips the pool is replicated and
    distinctness is impossible. Deterministic for a fixed seed.
    """
    if len(cb) == 0:
        raise ValueError("codebook must be nonempty")
    rng = np.random.default_rng(seed)
    n_w = len(cb)
    if q.n_rf > n_w:
        pool = np.tile(np.arange(n_w), q.n_rf)  # replicated codebook
        distinct = False
    else:
        pool = np.arange(n_w)
    benefit = q.benefit_matrix(cb)

    slots = np.arange(q.n_rf)
    start = rng.choice(pool.size, size=q.n_rf, replace=False)
    current = pool[start].copy()
    trajectory = [float(np.sum(benefit[slots, current]))]
    for c in pool[rng.permutation(pool.size)]:
        if distinct and np.any(current == c):
            trajectory.append(trajectory[-1])
            continue
        delta = benefit[:, c] - benefit[slots, current]
        best = int(np.argmax(delta))
        if delta[best] > 0.0:
            current[best] = c
        trajectory.append(float(np.sum(benefit[slots, current])))
    return _solution_from_indices(
        q,
        cb,
        current,
        "greedy",
        benefit=benefit,
        seed=seed,
        distinct=distinct,
        diagnostics={"trajectory": np.array(trajectory)},
    )


def solve_exhaustive(
    q: ObjectiveMatrix,
    cb: VectorCodebook,
    distinct: bool = False,
    cap: float = 1e7,
) -> BeamformerSolution:
    """Exact optimum over the codebook.

    With repetition allowed the objective separates across microstrips, so a
    per-block scan over all codewords already yields the global optimum and
    no tuple enumeration is needed. Under all-distinct codewords the optimum
    is a linear assignment on the block/codeword benefit matrix. The work
    cap bounds the number of quotient evaluations.
    """
    if len(cb) == 0:
        raise ValueError("codebook must be nonempty")
    work = q.n_rf * len(cb)
    if work > cap:
        raise InfeasibleSearchError(
            f"exhaustive search needs {work:.3g} quotient evaluations, cap is {cap:.3g}"
        )
    benefit = q.benefit_matrix(cb)
    if distinct:
        if len(cb) < q.n_rf:
            raise InfeasibleSearchError(
                f"distinct selection needs at least {q.n_rf} codewords, have {len(cb)}"
            )
        rows, cols = linear_sum_assignment(benefit, maximize=True)
        indices = cols[np.argsort(rows)]
        solver = "assignment"
    else:
        indices = np.argmax(benefit, axis=1)
        solver = "exhaustive"
    return _solution_from_indices(
        q, cb, indices, solver, benefit=benefit, distinct=distinct
    )


def solve_snr_max(
    channels: Sequence[NearFieldChannel],
    prop: PropagationMatrix,
    cb: VectorCodebook,
    q: Optional[ObjectiveMatrix] = None,
) -> BeamformerSolution:
    """Received-power-maximizing baseline.

    Each microstrip takes the codeword maximizing the summed matched-filter
    power over users, noise-normalized by the weight norm. Deterministic;
    used only for comparison, so the information objective is evaluated on
    the result when a Q factor is supplied.
    """
    if len(cb) == 0:
        raise ValueError("codebook must be nonempty")
    n_rf, n_e = prop.n_rf, prop.n_e
    norms2 = np.sum(np.abs(cb.vectors) ** 2, axis=1)
    score = np.zeros((n_rf, len(cb)))
    p_strips = prop.per_strip()
    for ch in channels:
        h_strips = ch.h.reshape(n_rf, n_e)
        sig = (p_strips * h_strips).conj()  # per-chain signature of this user
        score += np.abs(sig @ cb.vectors.conj().T) ** 2 / norms2
    indices = np.argmax(score, axis=1)
    if q is not None:
        sol = _solution_from_indices(q, cb, indices, "snr_max")
    else:
        sol = BeamformerSolution(
            beamformer=AnalogBeamformer.from_codebook(cb, indices),
            objective=float("nan"),
            solver="snr_max",
            per_strip_quotients=np.full(n_rf, np.nan),
            codeword_indices=np.asarray(indices),
        )
    sol.diagnostics["snr_scores"] = score[np.arange(n_rf), indices]
    return sol


def solve_random(q: ObjectiveMatrix, cb: VectorCodebook, seed: int) -> BeamformerSolution:
    """Unoptimized baseline: random admissible weights, deterministic per seed.

    For metamaterial codebooks every element draws its phase uniformly from
    the codebook's quantized phase alphabet (a random panel configuration,
    not a random focusing beam, so the baseline carries no focusing gain).
    For unit-modulus codebooks a uniform codeword is drawn per microstrip.
    """
    if len(cb) == 0:
        raise ValueError("codebook must be nonempty")
    rng = np.random.default_rng(seed)
    if cb.kind == "lorentzian":
        from .codebook import quantized_phase_set

        phases = quantized_phase_set(cb.bits if cb.bits else 3)
        idx = rng.integers(0, phases.size, size=(q.n_rf, q.n_e))
        bf = AnalogBeamformer(weights=0.5 * (1j + np.exp(1j * phases[idx])))
        quotients = np.array([q.quotient(i, bf.weights[i]) for i in range(q.n_rf)])
        return BeamformerSolution(
            beamformer=bf,
            objective=float(np.sum(quotients)),
            solver="random",
            per_strip_quotients=quotients,
            codeword_indices=None,
            seed=seed,
        )
    indices = rng.integers(0, len(cb), size=q.n_rf)
    return _solution_from_indices(q, cb, indices, "random", seed=seed)


def dense_objective(
    q: ObjectiveMatrix,
    bf: AnalogBeamformer,
    prop: PropagationMatrix,
    noise_power: float,
) -> float:
    """noise_power * Tr{Q F} evaluated with dense matrices.

    Independent cross-check of the blockwise quotients: builds the full
    block-diagonal beamformer, the dense chain covariance and F, and takes
    the trace. Coincides with the quotient sum for lossless waveguides.
    """
    w = bf.dense()
    p = prop.matrix
    r = noise_power * (w.conj().T @ p.conj().T @ p @ w)
    f = w @ np.linalg.inv(r) @ w.conj().T
    return float(noise_power * np.real(np.trace(q.dense() @ f)))


def design_beamformer(
    name: str,
    q: ObjectiveMatrix,
    cb: VectorCodebook,
    channels: Optional[Sequence[NearFieldChannel]] = None,
    prop: Optional[PropagationMatrix] = None,
    seed: int = 0,
    distinct: Optional[bool] = None,
    cap: float = 1e7,
) -> BeamformerSolution:
    """Uniform entry point used by the experiment harness."""
    if name == "projection":
        return solve_projection(q, cb, distinct=bool(distinct))
    if name == "greedy":
        return solve_greedy(q, cb, seed=seed, distinct=True if distinct is None else distinct)
    if name == "exhaustive":
        return solve_exhaustive(q, cb, distinct=bool(distinct), cap=cap)
    if name == "assignment":
        return solve_exhaustive(q, cb, distinct=True, cap=cap)
    if name == "random":
        return solve_random(q, cb, seed=seed)
    if name == "snr_max":
        if channels is None or prop is None:
            raise ValueError("snr_max needs channels and the propagation matrix")
        return solve_snr_max(channels, prop, cb, q=q)
    raise ValueError(f"unknown solver {name!r}; choose from {SOLVER_NAMES}")
