"""Miscibility conditions and the convexity gap of the density functional."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import SpectralField
from .functional import _Engine
from .model import ModelSpec

__all__ = ["MiscibilityResult", "miscibility_gp", "miscibility_mf", "convexity_gap", "interaction_gap",
           "random_density"]


@dataclass(frozen=True)
class MiscibilityResult:
    """Truthy when the condition holds; otherwise lists offending frequencies."""

    holds: bool
    violations: list = field(default_factory=list)
    worst_margin: float = 0.0

    def __bool__(self) -> bool:
        return self.holds


def miscibility_gp(a1: float, a2: float, a12: float) -> MiscibilityResult:
    """a1 a2 >= a12² with a1, a2 >= 0."""
    if a1 < 0 or a2 < 0:
        raise ValueError("intra-species scattering lengths must be nonnegative")
    margin = a1 * a2 - a12 * a12
    return MiscibilityResult(margin >= 0.0, [] if margin >= 0.0 else [()], margin)


def miscibility_mf(spec: ModelSpec, tol: float = 1e-12, max_listed: int = 10) -> MiscibilityResult:
    """V̂1 V̂2 >= V̂12² and V̂1, V̂2 >= 0 on the lattice frequencies.

    ``tol`` is relative to the largest |V̂|², so exact equality (the boundary
    case) survives rounding.
    """
    v1, v2, v12 = spec.fourier_interactions()
    scale = max(float(np.max(np.abs(v1))), float(np.max(np.abs(v2))), float(np.max(np.abs(v12)))) or 1.0
    margin = v1 * v2 - v12 * v12
    bad = (margin < -tol * scale * scale) | (v1 < -tol * scale) | (v2 < -tol * scale)
    worst = float(np.min(np.minimum(margin / scale**2, np.minimum(v1, v2) / scale)))
    if not bad.any():
        return MiscibilityResult(True, [], worst)
    ks = spec.grid.wavenumbers
    idx = np.argwhere(bad)[:max_listed]
    listed = [tuple(float(k[tuple(i)]) for k in ks) for i in idx]
    return MiscibilityResult(False, listed, worst)


def _check_density(f, grid, name):
    values = f.values if isinstance(f, SpectralField) else np.asarray(f)
    if np.iscomplexobj(values):
        if np.max(np.abs(values.imag)) > 0:
            raise ValueError(f"density {name} must be real")
        values = values.real
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"density {name} has shape {values.shape}, grid is {grid.shape}")
    if values.min() < 0:
        raise ValueError(f"density {name} has negative entries")
    mass = values.sum() * grid.cell_volume
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"density {name} integrates to {mass}, expected 1")
    return values


def _density_energy(eng: _Engine, f, g) -> float:
    return eng.energy(np.sqrt(f).astype(complex), np.sqrt(g).astype(complex))


def convexity_gap(f, g, r, s, spec: ModelSpec) -> float:
    """(D[f,g] + D[r,s])/2 - D[(f+r)/2, (g+s)/2] with D[f,g] = E[√f, √g]."""
    grid = spec.grid
    f, g, r, s = (_check_density(x, grid, n) for x, n in zip((f, g, r, s), "fgrs"))
    eng = _Engine(spec)
    left = 0.5 * (_density_energy(eng, f, g) + _density_energy(eng, r, s))
    return float(left - _density_energy(eng, 0.5 * (f + r), 0.5 * (g + s)))


def interaction_gap(f, g, r, s, spec: ModelSpec) -> float:
    """Interaction part of the convexity gap: the interaction quadratic form
    evaluated at ((f - r)/2, (g - s)/2)."""
    grid = spec.grid
    f, g, r, s = (_check_density(x, grid, n) for x, n in zip((f, g, r, s), "fgrs"))
    eng = _Engine(spec)
    c1, c2 = spec.ratios
    df, dg = 0.5 * (f - r), 0.5 * (g - s)
    return float(
        0.5 * c1 * c1 * eng.rip(df, eng.interact(df, 0))
        + 0.5 * c2 * c2 * eng.rip(dg, eng.interact(dg, 1))
        + c1 * c2 * eng.rip(df, eng.interact(dg, 2))
    )


def random_density(grid, rng: np.random.Generator) -> np.ndarray:
    """Smooth positive density of unit mass: exp of a low-pass random field."""
    coeffs = rng.standard_normal(grid.shape) * np.exp(-grid.k_squared / 4)
    field_ = np.fft.ifftn(coeffs).real
    f = np.exp(field_ / np.max(np.abs(field_)))
    return f / (f.sum() * grid.cell_volume)
