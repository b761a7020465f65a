"""Lorentzian-constrained element weights and the discrete beam codebook.

A metamaterial weight is confined to the circle w = 0.5 (j + e^{j phase})
with phase in [-pi/2, pi/2]. Codebooks collect per-microstrip weight vectors;
the default construction quantizes near-field focusing beams for a grid of
focal points and compensates the phase accumulated while the signal travels
down the microstrip. A DFT codebook (unit-modulus phase-shifter weights) is
provided for the hybrid-beamforming comparison architecture.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import RadioConfig, channel_matrix, propagation_matrix
from .geometry import DmaGeometry, UePosition, waveguide_arc_lengths

LORENTZIAN_TOL = 1e-12


@dataclass(frozen=True)
class LorentzianWeight:
    """Single element weight 0.5 (j + e^{j phase}).

    ``clamped`` records that a propagation-compensated phase fell outside
    [-pi/2, pi/2] and was clamped to the nearest endpoint.
    """

    phase: float
    clamped: bool = False

    @property
    def value(self) -> complex:
        return 0.5 * (1j + np.exp(1j * self.phase))


def lorentzian(phase: float) -> LorentzianWeight:
    """Weight for a phase in [-pi/2, pi/2]; endpoints give j and 0."""
    if not -np.pi / 2 <= phase <= np.pi / 2:
        raise ValueError(f"phase {phase} outside [-pi/2, pi/2]")
    return LorentzianWeight(phase=float(phase))


def quantized_phase_set(bits: int) -> np.ndarray:
    """2^bits phases spanning [-pi/2, pi/2] inclusive with uniform spacing."""
    if bits < 1:
        raise ValueError("need at least one phase bit")
    return np.linspace(-np.pi / 2, np.pi / 2, 2**bits)


def wrap_phase(phase: float) -> float:
    """Reduce a phase modulo 2 pi into [-pi, pi)."""
    return float(np.mod(phase + np.pi, 2.0 * np.pi) - np.pi)


def compensated_weight(phase: float, rho: float, beta: float, clamp: bool = True) -> LorentzianWeight:
    """Weight 0.5 (j + e^{j (phase + rho beta)}) compensating in-guide travel.

    The combined phase is wrapped into [-pi, pi). With ``clamp`` (default),
    values outside [-pi/2, pi/2] snap to the nearest endpoint and the result
    carries ``clamped=True``. Clamping keeps the nominal phase range but
    wrecks the compensation for deep elements (a -pi/2 clamp switches the
    element off entirely), so codebook construction disables it and keeps
    the full circle; the weight stays on |w - 0.5j| = 0.5 either way.
    """
    combined = wrap_phase(phase + rho * beta)
    if clamp and combined > np.pi / 2:
        return LorentzianWeight(phase=np.pi / 2, clamped=True)
    if clamp and combined < -np.pi / 2:
        return LorentzianWeight(phase=-np.pi / 2, clamped=True)
    return LorentzianWeight(phase=combined)


def quantize_phase(phase: float, phase_set: np.ndarray) -> int:
    """Index of the circularly-nearest entry of ``phase_set``."""
    diff = np.angle(np.exp(1j * (phase - phase_set)))
    return int(np.argmin(np.abs(diff)))


@dataclass
class VectorCodebook:
    """Finite set of per-microstrip weight vectors.

    ``vectors`` has shape (N_W, N_E). ``kind`` is "lorentzian" for
    metamaterial codebooks (every entry on the Lorentzian circle) or "dft"
    for unit-modulus phase-shifter columns.
    """

    vectors: np.ndarray
    kind: str = "lorentzian"
    bits: Optional[int] = None
    focal_grid: Optional[list] = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_e(self) -> int:
        return self.vectors.shape[1]

    def lorentzian_residual(self) -> float:
        """Largest deviation of any entry from the circle |w - 0.5j| = 0.5."""
        return float(np.max(np.abs(np.abs(self.vectors - 0.5j) - 0.5)))

    def to_json(self) -> str:
        doc = {
            "bits": self.bits,
            "kind": self.kind,
            "focal_grid": self.focal_grid,
            "metadata": self.metadata,
            "vectors": [
                [[float(w.real), float(w.imag)] for w in vec] for vec in self.vectors
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "VectorCodebook":
        doc = json.loads(text)
        vecs = np.array(
            [[complex(re, im) for re, im in vec] for vec in doc["vectors"]],
            dtype=complex,
        )
        return cls(
            vectors=vecs,
            kind=doc.get("kind", "lorentzian"),
            bits=doc.get("bits"),
            focal_grid=doc.get("focal_grid"),
            metadata=doc.get("metadata", {}),
        )


@dataclass
class AnalogBeamformer:
    """Per-microstrip analog weights, one length-N_E vector per RF chain."""

    weights: np.ndarray  # (n_rf, n_e) complex

    @property
    def n_rf(self) -> int:
        return self.weights.shape[0]

    @property
    def n_e(self) -> int:
        return self.weights.shape[1]

    def strip(self, i: int) -> np.ndarray:
        return self.weights[i]

    def dense(self) -> np.ndarray:
        """Block-diagonal (N, N_RF) matrix mapping elements to RF chains."""
        n = self.n_rf * self.n_e
        out = np.zeros((n, self.n_rf), dtype=complex)
        for i in range(self.n_rf):
            out[i * self.n_e : (i + 1) * self.n_e, i] = self.weights[i]
        return out

    def lorentzian_residual(self) -> float:
        return float(np.max(np.abs(np.abs(self.weights - 0.5j) - 0.5)))

    @classmethod
    def from_codebook(cls, cb: VectorCodebook, indices: Sequence[int]) -> "AnalogBeamformer":
        return cls(weights=cb.vectors[np.asarray(indices, dtype=int)].copy())


def focusing_phases(
    cfg: RadioConfig, geom: DmaGeometry, focal: UePosition, ref_strip: Optional[int] = None
) -> np.ndarray:
    """Conjugate-focusing element phases for one reference microstrip.

    Negating each entry's channel phase makes the per-element contributions
    add coherently at the RF chain once in-guide propagation is compensated.
    The default reference is the farthest microstrip: the origin strip's
    distances do not depend on azimuth, so beams referenced there would
    collapse the azimuth dimension of a focal grid.
    """
    if ref_strip is None:
        ref_strip = geom.n_rf - 1
    h = channel_matrix(cfg, geom, np.array([focal.r, focal.theta, focal.phi]))
    return -np.angle(h[ref_strip * geom.n_e : (ref_strip + 1) * geom.n_e])


def build_codebook(
    cfg: RadioConfig,
    geom: DmaGeometry,
    focal_grid: Sequence[UePosition],
    bits: int,
    clamp: bool = False,
    ref_strip="all",
) -> VectorCodebook:
    """Quantized near-field focusing codebook over a grid of focal points.

    For every focal point the conjugate-focusing phases of a reference
    microstrip are quantized to the 2^bits phase set, then shifted by the
    in-guide compensation rho * beta. With the default ``ref_strip="all"``
    every microstrip contributes its own focusing variant per focal point,
    so wide panels can assign each strip a beam referenced at its own
    offset; an integer restricts the build to one reference strip.
    Duplicates are removed and the result is sorted canonically so the
    codebook is independent of focal-grid ordering. Clamping the
    compensated phases back into [-pi/2, pi/2] is available but off by
    default; see compensated_weight.
    """
    if len(focal_grid) == 0:
        raise ValueError("focal grid must be nonempty")
    phase_set = quantized_phase_set(bits)
    rho = waveguide_arc_lengths(geom)[: geom.n_e]
    refs = list(range(geom.n_rf)) if ref_strip == "all" else [int(ref_strip)]

    seen = {}
    clamped_total = 0
    for focal in focal_grid:
        h = channel_matrix(cfg, geom, np.array([focal.r, focal.theta, focal.phi]))
        raw_all = -np.angle(h.reshape(geom.n_rf, geom.n_e))
        for ref in refs:
            raw = raw_all[ref]
            # circularly nearest quantized phase per element
            diff = np.angle(np.exp(1j * (raw[:, None] - phase_set[None, :])))
            idx = np.argmin(np.abs(diff), axis=1)
            combined = np.mod(phase_set[idx] + rho * geom.beta_wg + np.pi, 2 * np.pi) - np.pi
            clamps = 0
            if clamp:
                out_of_range = np.abs(combined) > np.pi / 2
                clamps = int(np.count_nonzero(out_of_range))
                combined = np.clip(combined, -np.pi / 2, np.pi / 2)
            key = tuple(np.round(combined, 12))
            if key not in seen:
                seen[key] = combined
                clamped_total += clamps

    ordered = sorted(seen.values(), key=lambda p: tuple(p))
    vectors = np.array([0.5 * (1j + np.exp(1j * p)) for p in ordered])
    return VectorCodebook(
        vectors=vectors,
        kind="lorentzian",
        bits=bits,
        focal_grid=[[f.r, f.theta, f.phi] for f in focal_grid],
        metadata={
            "n_candidates": len(focal_grid) * len(list(refs)),
            "ref_strip": ref_strip,
            "clamp_policy": bool(clamp),
            "clamped_entries": clamped_total,
            "beta_wg": geom.beta_wg,
        },
    )


def dft_codebook(n_e: int) -> VectorCodebook:
    """Unit-modulus DFT columns, the phase-shifter codebook for the HBF preset."""
    k = np.arange(n_e)
    vectors = np.exp(-2j * np.pi * np.outer(k, k) / n_e)
    return VectorCodebook(vectors=vectors, kind="dft", metadata={"n_e": n_e})


def default_focal_grid(
    n_ranges: int = 12,
    n_azimuths: int = 16,
    r_span: tuple = (1.0, 12.0),
    phi_span_deg: tuple = (1.0, 90.0),
    theta_deg: float = 30.0,
) -> list:
    """Range x azimuth focal points at a fixed elevation."""
    ranges = np.linspace(r_span[0], r_span[1], n_ranges)
    azimuths = np.deg2rad(np.linspace(phi_span_deg[0], phi_span_deg[1], n_azimuths))
    theta = np.deg2rad(theta_deg)
    return [UePosition(float(r), float(theta), float(p)) for r in ranges for p in azimuths]
