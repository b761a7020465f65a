import numpy as np
import pytest

from dmaloc import (
    DegenerateGeometryError,
    DmaGeometry,
    ElementIndex,
    UePosition,
    element_position,
    ue_element_distance,
    ue_element_distances,
    ue_element_elevation,
    ue_element_elevations,
)
from conftest import random_ue


GEOM = DmaGeometry(n_rf=4, n_e=8, d_rf=1.25e-3, d_e=0.5e-3)


def distance_oracle(geom, ue, i, n):
    # direct transcription of the layout: spherical user vs element offsets
    x = ue.r * np.sin(ue.theta) * np.cos(ue.phi) - (i - 1) * geom.d_rf
    y = ue.r * np.sin(ue.theta) * np.sin(ue.phi)
    z = ue.r * np.cos(ue.theta) - (n - 1) * geom.d_e
    return np.sqrt(x * x + y * y + z * z)


class TestElementPosition:
    def test_origin(self):
        assert np.allclose(element_position(GEOM, ElementIndex(1, 1)), [0, 0, 0])

    def test_one_strip_step(self):
        assert np.allclose(element_position(GEOM, ElementIndex(2, 1)), [1.25e-3, 0, 0])

    def test_layout_formula(self):
        # (i=3, n=5): x = 2 * 1.25e-3, z = 4 * 0.5e-3
        pos = element_position(GEOM, ElementIndex(3, 5))
        assert np.allclose(pos, [2.5e-3, 0.0, 2.0e-3])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            element_position(GEOM, ElementIndex(5, 1))
        with pytest.raises(IndexError):
            element_position(GEOM, ElementIndex(1, 9))
        with pytest.raises(ValueError):
            ElementIndex(0, 1)

    def test_flat_index_convention(self):
        assert ElementIndex(1, 1).flat(GEOM) == 0
        assert ElementIndex(2, 1).flat(GEOM) == 8
        assert ElementIndex(3, 5).flat(GEOM) == 2 * 8 + 4


class TestDistance:
    def test_origin_element_gives_range(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            ue = random_ue(rng)
            assert ue_element_distance(GEOM, ue, ElementIndex(1, 1)) == pytest.approx(ue.r, rel=1e-14)

    def test_collinear_along_x(self):
        ue = UePosition(2.0, np.pi / 2, 0.0)
        for i in range(1, 5):
            expected = abs(2.0 - (i - 1) * GEOM.d_rf)
            assert ue_element_distance(GEOM, ue, ElementIndex(i, 1)) == pytest.approx(expected, rel=1e-14)

    def test_matches_transcription_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            ue = random_ue(rng)
            i = int(rng.integers(1, 5))
            n = int(rng.integers(1, 9))
            got = ue_element_distance(GEOM, ue, ElementIndex(i, n))
            assert got == pytest.approx(distance_oracle(GEOM, ue, i, n), rel=1e-12)

    def test_azimuth_sign_symmetry(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            ue = random_ue(rng)
            if ue.phi == np.pi:  # -pi is outside the domain
                continue
            mirrored = UePosition(ue.r, ue.theta, -ue.phi)
            assert np.allclose(
                ue_element_distances(GEOM, ue), ue_element_distances(GEOM, mirrored), rtol=1e-13
            )

    def test_vector_matches_scalar(self):
        ue = UePosition(3.0, 1.0, 0.5)
        vec = ue_element_distances(GEOM, ue)
        for i in range(1, 5):
            for n in range(1, 9):
                k = ElementIndex(i, n).flat(GEOM)
                assert vec[k] == pytest.approx(ue_element_distance(GEOM, ue, ElementIndex(i, n)), rel=1e-14)


class TestElevation:
    def test_zero_when_user_in_plane_of_first_row(self):
        ue = UePosition(2.0, np.pi / 2, 0.3)  # r cos(theta) = 0
        assert ue_element_elevation(GEOM, ue, ElementIndex(1, 1)) == pytest.approx(0.0, abs=1e-12)

    def test_limit_directly_above_element(self):
        # user on the z-axis: only a z-offset from the origin element
        ue = UePosition(0.5, 0.0, 0.0)
        assert ue_element_elevation(GEOM, ue, ElementIndex(1, 1)) == pytest.approx(np.pi / 2)

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            ue = random_ue(rng)
            i = int(rng.integers(1, 5))
            n = int(rng.integers(1, 9))
            dist = distance_oracle(GEOM, ue, i, n)
            want = np.arcsin(abs((n - 1) * GEOM.d_e - ue.r * np.cos(ue.theta)) / dist)
            got = ue_element_elevation(GEOM, ue, ElementIndex(i, n))
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_range_and_argument_bounds(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            ue = random_ue(rng)
            elevs = ue_element_elevations(GEOM, ue)
            assert np.all(elevs >= 0.0) and np.all(elevs <= np.pi / 2)

    def test_degenerate_user_on_element(self):
        ue = UePosition(GEOM.d_rf, np.pi / 2, 0.0)  # exactly on element (2, 1)
        with pytest.raises(DegenerateGeometryError):
            ue_element_elevations(GEOM, ue)


class TestValidation:
    def test_geometry_invariants(self):
        with pytest.raises(ValueError):
            DmaGeometry(n_rf=0, n_e=4, d_rf=1e-3, d_e=1e-3)
        with pytest.raises(ValueError):
            DmaGeometry(n_rf=1, n_e=4, d_rf=-1e-3, d_e=1e-3)
        with pytest.raises(ValueError):
            DmaGeometry(n_rf=1, n_e=4, d_rf=1e-3, d_e=1e-3, alpha_wg=-0.1)

    def test_position_invariants(self):
        with pytest.raises(ValueError):
            UePosition(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            UePosition(1.0, -0.1, 0.0)
        with pytest.raises(ValueError):
            UePosition(1.0, 1.0, -np.pi)

    def test_diagonal_length(self):
        geom = DmaGeometry(n_rf=2, n_e=2, d_rf=3.0, d_e=4.0)
        assert geom.diagonal_length == pytest.approx(5.0)
