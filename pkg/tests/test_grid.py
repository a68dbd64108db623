import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twobose.grid import (
    Grid,
    GridMismatchError,
    SpectralField,
    fourier_coefficients,
    h1_norm,
    inner_product,
    l2_norm,
    laplacian_apply,
    normalize,
    periodic_convolve,
)


def brute_convolve_1d(f, g, grid):
    """Direct O(n²) sum over periodic displacements on the centred lattice."""
    n = grid.points_per_axis
    half = n // 2
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        for j in range(n):
            # x_i - x_j wrapped into the box, as a lattice index
            out[i] += f[(i - j + half) % n] * g[j]
    return out * grid.spacing


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(2, 16, 1.0)
    with pytest.raises(ValueError):
        Grid(1, 12, 1.0)
    with pytest.raises(ValueError):
        Grid(1, 16, -1.0)
    g = Grid(3, 8, 4.0)
    assert g.shape == (8, 8, 8)
    assert g.spacing == 0.5
    assert g.axis[4] == 0.0


def test_laplacian_plane_wave():
    g = Grid(1, 32, 2 * np.pi)
    f = g.sample(lambda x: np.exp(3j * x))
    out = laplacian_apply(f)
    assert np.max(np.abs(out.values - 9 * f.values)) < 1e-12


def test_laplacian_gaussian_closed_form():
    g = Grid(3, 64, 16.0)
    f = g.sample(lambda x, y, z: np.exp(-(x * x + y * y + z * z) / 2))
    r2 = g.radius**2
    expected = (3 - r2) * np.exp(-r2 / 2)
    assert np.max(np.abs(laplacian_apply(f).values - expected)) < 1e-9


def test_laplacian_refined_grid_agrees():
    coarse = Grid(1, 128, 20.0)
    fine = coarse.refine(2)
    func = lambda x: np.exp(-x * x) * np.cos(x)  # noqa: E731
    lc = laplacian_apply(coarse.sample(func)).values
    lf = laplacian_apply(fine.sample(func)).values[::2]
    assert np.max(np.abs(lc - lf)) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_convolution_matches_double_sum(seed):
    rng = np.random.default_rng(seed)
    g = Grid(1, 16, 3.0)
    f = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    out = periodic_convolve(SpectralField(g, f), SpectralField(g, h)).values
    assert np.max(np.abs(out - brute_convolve_1d(f, h, g))) < 1e-12


def test_convolution_identity_and_constants():
    g = Grid(3, 8, 2.0)
    delta = np.zeros(g.shape)
    delta[4, 4, 4] = 1.0 / g.cell_volume
    rng = np.random.default_rng(0)
    f = SpectralField(g, rng.standard_normal(g.shape))
    out = periodic_convolve(SpectralField(g, delta), f)
    assert np.max(np.abs(out.values - f.values)) < 1e-12
    ones = SpectralField(g, np.ones(g.shape))
    conv = periodic_convolve(f, ones)
    assert np.allclose(conv.values, f.integral())


def test_norms_and_parseval():
    g = Grid(1, 64, 10.0)
    rng = np.random.default_rng(1)
    f = SpectralField(g, rng.standard_normal(64) + 1j * rng.standard_normal(64))
    c = fourier_coefficients(f)
    assert abs(np.sum(np.abs(c) ** 2) - l2_norm(f) ** 2) < 1e-10
    assert abs(inner_product(f, f).real - l2_norm(f) ** 2) < 1e-10
    assert h1_norm(f) >= l2_norm(f)
    n = normalize(f)
    assert abs(l2_norm(n) - 1.0) < 1e-14
    with pytest.raises(ValueError):
        normalize(SpectralField(g, np.zeros(64)))


def test_grid_mismatch():
    a = SpectralField(Grid(1, 16, 1.0), np.ones(16))
    b = SpectralField(Grid(1, 16, 2.0), np.ones(16))
    with pytest.raises(GridMismatchError):
        inner_product(a, b)
    with pytest.raises(GridMismatchError):
        periodic_convolve(a, b)


def test_field_is_immutable():
    f = SpectralField(Grid(1, 8, 1.0), np.ones(8))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
