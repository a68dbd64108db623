"""Periodic spectral discretization of a cubic box.

Fields live on the cell-centred lattice ``x_j = -L/2 + j * dx`` along each
axis, so the origin sits at index ``n // 2``.  Derivatives are Fourier
multipliers and convolutions are exact circular convolutions, which makes
every operation here exact on band-limited data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralField",
    "GridMismatchError",
    "laplacian_apply",
    "periodic_convolve",
    "inner_product",
    "l2_norm",
    "h1_norm",
    "normalize",
    "fourier_coefficients",
]


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    dim: int
    points_per_axis: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 3):
            raise ValueError(f"dim must be 1 or 3, got {self.dim}")
        n = int(self.points_per_axis)
        if n < 8 or n & (n - 1):
            raise ValueError(
                f"points_per_axis must be a power of two >= 8, got {self.points_per_axis}"
            )
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")
        object.__setattr__(self, "points_per_axis", n)
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def spacing(self) -> float:
        return self.box_length / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return self.box_length**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        n = self.points_per_axis
        return -0.5 * self.box_length + self.spacing * np.arange(n)

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """Distance of every grid point from the origin."""
        return np.sqrt(sum(c * c for c in self.coordinates))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k = 2.0 * np.pi * sfft.fftfreq(self.points_per_axis, d=self.spacing)
        return tuple(np.meshgrid(*([k] * self.dim), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers)

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.dim, self.points_per_axis * factor, self.box_length)

    def sample(self, func) -> "SpectralField":
        """Evaluate ``func(*coords)`` on the grid."""
        return SpectralField(self, np.asarray(func(*self.coordinates), dtype=complex))

    def sample_radial(self, func) -> "SpectralField":
        """Evaluate a radial profile ``func(r)`` at every grid point."""
        return SpectralField(self, np.asarray(func(self.radius), dtype=complex))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points_per_axis, "length": self.box_length}


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "SpectralField":
        return SpectralField(self.grid, values)

    def __add__(self, other):
        if isinstance(other, SpectralField):
            _check_same_grid(self, other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            _check_same_grid(self, other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            _check_same_grid(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "SpectralField":
        return self.with_values(np.conj(self.values))

    def abs(self) -> "SpectralField":
        return self.with_values(np.abs(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def integral(self) -> complex:
        return complex(self.values.sum() * self.grid.cell_volume)


def _check_same_grid(f: SpectralField, g: SpectralField) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"grid mismatch: {f.grid} vs {g.grid}")


# Array-level kernels.  The meanfield solver calls these directly on raw
# arrays to avoid wrapping every intermediate.

def apply_laplacian_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Return -Δ values as a complex array."""
    return sfft.ifftn(grid.k_squared * sfft.fftn(values))


def convolve_arrays(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    # circular convolution lands index 0 on displacement -L/2; shift back to
    # the cell-centred layout so that a one-hot at the origin is the identity
    circ = sfft.ifftn(sfft.fftn(f) * sfft.fftn(g))
    half = grid.points_per_axis // 2
    return np.roll(circ, -half, axis=tuple(range(grid.dim))) * grid.cell_volume


def kernel_transform(kernel: np.ndarray, grid: Grid) -> np.ndarray:
    """Fourier transform of a kernel sampled in the centred layout.

    Multiplying ``fftn(g)`` by this and inverting gives ``kernel * g`` in the
    centred layout.  For kernels even in x the result is real up to the
    unpaired Nyquist plane.
    """
    return sfft.fftn(sfft.ifftshift(kernel)) * grid.cell_volume


def convolve_with_transform(kernel_hat: np.ndarray, g: np.ndarray) -> np.ndarray:
    return sfft.ifftn(kernel_hat * sfft.fftn(g))


def laplacian_apply(f: SpectralField) -> SpectralField:
    """-Δf via the Fourier multiplier |k|^2."""
    return f.with_values(apply_laplacian_array(f.values, f.grid))


def periodic_convolve(f: SpectralField, g: SpectralField) -> SpectralField:
    """(f * g)(x) = Σ_y f(x - y) g(y) dx^dim with periodic wraparound."""
    _check_same_grid(f, g)
    return f.with_values(convolve_arrays(f.values, g.values, f.grid))


def inner_product(f: SpectralField, g: SpectralField) -> complex:
    """<f, g>, antilinear in the first slot."""
    _check_same_grid(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


def l2_norm(f: SpectralField) -> float:
    return float(np.sqrt(np.vdot(f.values, f.values).real * f.grid.cell_volume))


def h1_norm(f: SpectralField) -> float:
    kinetic = np.vdot(f.values, apply_laplacian_array(f.values, f.grid)).real
    return float(np.sqrt((np.vdot(f.values, f.values).real + kinetic) * f.grid.cell_volume))


def normalize(f: SpectralField) -> SpectralField:
    norm = l2_norm(f)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite field")
    return f.with_values(f.values / norm)


def fourier_coefficients(f: SpectralField) -> np.ndarray:
    """Coefficients c_k with f(x) = Σ_k c_k e^{ik·x} / sqrt(|box|).

    With this normalization Parseval reads ||f||_2^2 = Σ |c_k|^2.
    """
    n_total = f.grid.size
    return sfft.fftn(f.values) * np.sqrt(f.grid.volume) / n_total
