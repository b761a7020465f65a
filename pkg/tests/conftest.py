import numpy as np
import pytest

from dmaloc import DmaGeometry, RadioConfig, UePosition

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def radio():
    return RadioConfig(f_c=120e9, bandwidth=150e3)


@pytest.fixture(scope="session")
def desk_geom(radio):
    lam = radio.wavelength
    return DmaGeometry(n_rf=4, n_e=32, d_rf=lam / 2, d_e=lam / 5, beta_wg=2 * np.pi / lam)


@pytest.fixture(scope="session")
def small_geom(radio):
    lam = radio.wavelength
    return DmaGeometry(n_rf=2, n_e=8, d_rf=lam / 2, d_e=lam / 5, beta_wg=2 * np.pi / lam)


@pytest.fixture(scope="session")
def desk_ues():
    return [
        UePosition.from_degrees(2.0, 30.0, 25.0),
        UePosition.from_degrees(4.0, 30.0, 45.0),
        UePosition.from_degrees(6.0, 30.0, 65.0),
    ]


def random_ue(rng, r_span=(0.5, 12.0)):
    return UePosition(
        r=float(rng.uniform(*r_span)),
        theta=float(rng.uniform(0.15, np.pi - 0.15)),
        phi=float(rng.uniform(-np.pi + 1e-6, np.pi)),
    )


def random_geometry(rng, lam, max_rf=3, max_e=8, min_rf=1):
    return DmaGeometry(
        n_rf=int(rng.integers(min_rf, max_rf + 1)),
        n_e=int(rng.integers(2, max_e + 1)),
        d_rf=float(rng.uniform(0.3, 0.7) * lam),
        d_e=float(rng.uniform(0.15, 0.5) * lam),
        alpha_wg=float(rng.choice([0.0, rng.uniform(0.0, 3.0)])),
        beta_wg=float(2 * np.pi / lam),
    )
