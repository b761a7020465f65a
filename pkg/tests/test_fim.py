import numpy as np
import pytest

from dmaloc import (
    AnalogBeamformer,
    FimResult,
    PilotBlock,
    SingularCovarianceError,
    UnidentifiableConfigurationError,
    cartesian_peb,
    channel_derivatives,
    dbm_to_mw,
    fim_matrix,
    noise_covariance,
    peb,
    propagation_matrix,
    trace_bound,
)
from dmaloc.codebook import quantized_phase_set
from conftest import random_geometry, random_ue


def random_lorentzian_beamformer(rng, n_rf, n_e, bits=3):
    phases = quantized_phase_set(bits)
    idx = rng.integers(0, phases.size, size=(n_rf, n_e))
    return AnalogBeamformer(weights=0.5 * (1j + np.exp(1j * phases[idx])))


def dense_fim_oracle(channels, bf, prop, pilots, noise_power):
    """Straight Gaussian-FIM transcription: dense matrices, explicit time loop."""
    w = bf.dense()
    p = prop.matrix
    s = pilots.s
    rn = noise_power * (w.conj().T @ p.conj().T @ p @ w)
    rinv = np.linalg.inv(rn)
    dim = 3 * len(channels)
    dms = []
    for u, ch in enumerate(channels):
        for name in ("r", "theta", "phi"):
            g = w.conj().T @ p.conj().T @ np.conj(ch.derivative(name))
            dms.append(np.outer(g, s[u]))
    fim = np.zeros((dim, dim))
    for a in range(dim):
        for b in range(dim):
            acc = 0.0
            for t in range(pilots.n_samples):
                acc += 2.0 * np.real(dms[a][:, t].conj() @ rinv @ dms[b][:, t])
            fim[a, b] = acc
    return fim


def make_scenario(rng, radio, n_ue=1, alpha=None, min_rf=1):
    geom = random_geometry(rng, radio.wavelength, min_rf=min_rf)
    if alpha is not None:
        geom = type(geom)(
            n_rf=geom.n_rf, n_e=geom.n_e, d_rf=geom.d_rf, d_e=geom.d_e,
            alpha_wg=alpha, beta_wg=geom.beta_wg,
        )
    ues = [random_ue(rng, r_span=(1.0, 10.0)) for _ in range(n_ue)]
    channels = [channel_derivatives(radio, geom, ue) for ue in ues]
    prop = propagation_matrix(geom)
    bf = random_lorentzian_beamformer(rng, geom.n_rf, geom.n_e)
    return geom, ues, channels, prop, bf


class TestPilotBlock:
    def test_orthogonal_gram_exact(self):
        pil = PilotBlock.orthogonal(3, 16, 2.5)
        gram = pil.gram()
        assert np.array_equal(gram, 16 * 2.5 * np.eye(3))
        numeric = pil.s @ pil.s.conj().T
        assert np.allclose(numeric, gram, rtol=1e-12, atol=1e-9 * 16 * 2.5)

    def test_per_sample_power(self):
        pil = PilotBlock.orthogonal(2, 8, 3.0)
        assert np.allclose(np.abs(pil.s) ** 2, 3.0)
        qpsk = PilotBlock.random_qpsk(2, 8, 3.0, seed=1)
        assert np.allclose(np.abs(qpsk.s) ** 2, 3.0)

    def test_requires_enough_samples(self):
        with pytest.raises(ValueError):
            PilotBlock.orthogonal(5, 4, 1.0)

    def test_rejects_nonpositive_power(self):
        with pytest.raises(ValueError):
            PilotBlock.orthogonal(1, 4, 0.0)


class TestNoiseCovariance:
    def test_all_on_lossless(self, radio):
        geom = random_geometry(np.random.default_rng(0), radio.wavelength)
        bf = AnalogBeamformer(weights=np.full((geom.n_rf, geom.n_e), 1j))
        prop = propagation_matrix(
            type(geom)(n_rf=geom.n_rf, n_e=geom.n_e, d_rf=geom.d_rf, d_e=geom.d_e,
                       alpha_wg=0.0, beta_wg=geom.beta_wg)
        )
        diag = noise_covariance(bf, prop, 2.0)
        assert np.allclose(diag, 2.0 * geom.n_e)

    def test_dark_microstrip_raises(self, radio, small_geom):
        weights = np.full((small_geom.n_rf, small_geom.n_e), 1j)
        weights[1] = 0.0  # phase -pi/2 turns every element off
        bf = AnalogBeamformer(weights=weights)
        with pytest.raises(SingularCovarianceError):
            noise_covariance(bf, propagation_matrix(small_geom), 1.0)

    def test_matches_dense_oracle(self, radio):
        rng = np.random.default_rng(31)
        for _ in range(10):
            geom, _, _, prop, bf = make_scenario(rng, radio)
            diag = noise_covariance(bf, prop, radio.noise_power)
            w = bf.dense()
            p = prop.matrix
            dense = radio.noise_power * (w.conj().T @ p.conj().T @ p @ w)
            assert np.allclose(np.diag(dense).real, diag, rtol=1e-12)
            off = dense - np.diag(np.diag(dense))
            assert np.max(np.abs(off)) <= 1e-15 * np.max(diag)


class TestFimMatrix:
    def test_against_dense_oracle_two_users(self, radio):
        rng = np.random.default_rng(32)
        for _ in range(5):
            geom, ues, channels, prop, bf = make_scenario(rng, radio, n_ue=2)
            pilots = PilotBlock.orthogonal(2, 6, dbm_to_mw(0.0))
            got = fim_matrix(channels, bf, prop, pilots, radio.noise_power)
            want = dense_fim_oracle(channels, bf, prop, pilots, radio.noise_power)
            scale = np.max(np.abs(want))
            assert np.allclose(got.fim, want, rtol=1e-10, atol=1e-10 * scale)

    def test_doubling_power_doubles_entries_exactly(self, radio):
        rng = np.random.default_rng(33)
        geom, ues, channels, prop, bf = make_scenario(rng, radio)
        f1 = fim_matrix(channels, bf, prop, PilotBlock.orthogonal(1, 8, 0.125), radio.noise_power)
        f2 = fim_matrix(channels, bf, prop, PilotBlock.orthogonal(1, 8, 0.25), radio.noise_power)
        assert np.array_equal(f2.fim, 2.0 * f1.fim)

    def test_orthogonal_cross_blocks_exactly_zero(self, radio):
        rng = np.random.default_rng(34)
        geom, ues, channels, prop, bf = make_scenario(rng, radio, n_ue=2)
        res = fim_matrix(channels, bf, prop, PilotBlock.orthogonal(2, 8, 1.0), radio.noise_power)
        assert np.all(res.fim[:3, 3:] == 0.0)
        assert np.all(res.fim[3:, :3] == 0.0)

    def test_conjugation_convention_invariance(self, radio):
        rng = np.random.default_rng(35)
        geom, ues, channels, prop, bf = make_scenario(rng, radio, n_ue=2, alpha=1.1)
        pilots = PilotBlock.random_qpsk(2, 16, 1.7, seed=4)
        a = fim_matrix(channels, bf, prop, pilots, radio.noise_power, conjugate_model=True)
        b = fim_matrix(channels, bf, prop, pilots, radio.noise_power, conjugate_model=False)
        assert np.allclose(a.fim, b.fim, rtol=1e-10)

    def test_pilot_phase_rotation_invariance(self, radio):
        rng = np.random.default_rng(36)
        geom, ues, channels, prop, bf = make_scenario(rng, radio, n_ue=2)
        base = PilotBlock.random_qpsk(2, 12, 2.0, seed=9)
        rotated = PilotBlock(
            s_unit=base.s_unit * np.exp(1j * 0.83), p_max_mw=2.0, mode="random-qpsk"
        )
        a = fim_matrix(channels, bf, prop, base, radio.noise_power)
        b = fim_matrix(channels, bf, prop, rotated, radio.noise_power)
        # cross-user entries are cancellation noise; compare on the FIM scale
        assert np.allclose(a.fim, b.fim, rtol=1e-10, atol=1e-10 * np.max(np.abs(a.fim)))

    def test_symmetry_and_psd_floor(self, radio):
        rng = np.random.default_rng(37)
        for _ in range(20):
            geom, ues, channels, prop, bf = make_scenario(rng, radio, n_ue=int(rng.integers(1, 3)))
            res = fim_matrix(channels, bf, prop, PilotBlock.orthogonal(len(ues), 8, 1.0), radio.noise_power)
            assert np.array_equal(res.fim, res.fim.T)
            assert res.eigenvalues[0] >= -1e-10 * max(res.eigenvalues[-1], 0.0)
            assert res.crb >= res.trace_bound or not np.isfinite(res.crb)

    def test_requires_derivatives(self, radio, small_geom, desk_ues):
        from dmaloc import channel_vector

        channels = [channel_vector(radio, small_geom, desk_ues[0])]
        prop = propagation_matrix(small_geom)
        bf = random_lorentzian_beamformer(np.random.default_rng(0), small_geom.n_rf, small_geom.n_e)
        with pytest.raises(ValueError):
            fim_matrix(channels, bf, prop, PilotBlock.orthogonal(1, 4, 1.0), radio.noise_power)


class TestBounds:
    def test_peb_identity(self):
        res = FimResult.from_matrix(np.eye(3))
        assert res.peb == pytest.approx(np.sqrt(3.0))
        assert peb(res) == pytest.approx(np.sqrt(3.0))

    def test_peb_diagonal(self):
        res = FimResult.from_matrix(np.diag([4.0, 1.0, 1.0]))
        assert peb(res) == pytest.approx(1.5)
        assert np.allclose(res.per_param_crb(), [0.25, 1.0, 1.0])

    def test_power_scaling_law(self, radio):
        rng = np.random.default_rng(38)
        # two or more microstrips keep all three parameters observable
        geom, ues, channels, prop, bf = make_scenario(rng, radio, min_rf=2)
        powers = [dbm_to_mw(p) for p in (-10.0, 0.0, 10.0, 20.0)]
        results = [
            fim_matrix(channels, bf, prop, PilotBlock.orthogonal(1, 8, p), radio.noise_power)
            for p in powers
        ]
        pebs = np.array([r.peb for r in results])
        assert np.all(np.diff(pebs) < 0)
        products = pebs * np.sqrt(powers)
        assert np.all(np.abs(products - products[0]) <= 1e-9 * products[0])

    def test_trace_bound_examples(self):
        assert trace_bound(FimResult.from_matrix(np.eye(3))) == pytest.approx(3.0)
        res = FimResult.from_matrix(np.diag([1.0, 2.0]))
        assert trace_bound(res) == pytest.approx(4.0 / 3.0)
        assert trace_bound(res) <= res.crb

    def test_trace_bound_random_psd(self):
        rng = np.random.default_rng(39)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            a = rng.standard_normal((n, n))
            mat = a @ a.T + 1e-6 * np.eye(n)
            res = FimResult.from_matrix(mat)
            assert res.trace_bound <= res.crb * (1 + 1e-12)

    def test_equal_eigenvalue_equality(self):
        for c in (0.5, 1.0, 7.3):
            res = FimResult.from_matrix(c * np.eye(6))
            assert abs(res.crb - res.trace_bound) <= 1e-9 * res.crb

    def test_zero_trace_rejected(self):
        with pytest.raises(ValueError):
            trace_bound(FimResult.from_matrix(np.zeros((3, 3))))

    def test_ill_conditioned_raises_with_direction(self):
        res = FimResult.from_matrix(np.diag([1.0, 1e-20, 1.0]))
        with pytest.raises(UnidentifiableConfigurationError) as ei:
            peb(res)
        assert ei.value.direction is not None
        assert abs(ei.value.direction[1]) > 0.9
        assert "theta_1" in str(ei.value)

    def test_cartesian_peb_identity_fim(self, desk_ues):
        res = FimResult.from_matrix(np.eye(9))
        ues = desk_ues
        # Tr{J I J^T} = sum of squared Jacobian entries
        total = 0.0
        for ue in ues:
            st, ct = np.sin(ue.theta), np.cos(ue.theta)
            sp, cp = np.sin(ue.phi), np.cos(ue.phi)
            j = np.array(
                [
                    [st * cp, ue.r * ct * cp, -ue.r * st * sp],
                    [st * sp, ue.r * ct * sp, ue.r * st * cp],
                    [ct, -ue.r * st, 0.0],
                ]
            )
            total += np.sum(j * j)
        assert cartesian_peb(res, ues) == pytest.approx(np.sqrt(total), rel=1e-12)
