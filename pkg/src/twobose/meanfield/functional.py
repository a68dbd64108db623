"""Energies, chemical potentials and residuals of the two-species functionals.

Both regimes share one structure.  With ρ = |u|², σ = |v|² and W_αβ the
interaction operator (convolution with V in MF, multiplication by 8πa in GP)

    E = c1 <u, (-Δ+U1) u> + c2 <v, (-Δ+U2) v>
        + c1²/2 <ρ, W1 ρ> + c2²/2 <σ, W2 σ> + c1 c2 <ρ, W12 σ>.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from ..grid import SpectralField
from .model import ModelSpec, NormalizationError, OrbitalPair

__all__ = [
    "gp_energy",
    "hartree_energy",
    "energy_terms",
    "chemical_potentials",
    "meanfield_residual",
    "energy_gradient",
    "mean_field_operators",
]


class _Engine:
    """Array-level evaluation of the functional for one ModelSpec."""

    def __init__(self, spec: ModelSpec, workers: int | None = None):
        self.spec = spec
        self.grid = spec.grid
        self.dv = spec.grid.cell_volume
        self.k2 = spec.grid.k_squared
        self.traps = (spec.traps[0].values.real, spec.traps[1].values.real)
        self.hats = spec.kernel_transforms
        half = spec.grid.points_per_axis // 2 + 1
        # densities are real, so their transforms only need the half spectrum
        self.rhats = tuple(h[..., :half] for h in self.hats)
        self.shape = spec.grid.shape
        self.zero = spec.interaction_is_zero
        self.contact = spec.regime == "GP"
        self.workers = workers

    # -- primitives ------------------------------------------------------

    def fft(self, a):
        return sfft.fftn(a, workers=self.workers)

    def ifft(self, a):
        return sfft.ifftn(a, workers=self.workers)

    def one_body(self, f, species: int):
        """(-Δ + U) f."""
        return self.ifft(self.k2 * self.fft(f)) + self.traps[species] * f

    def rfft(self, a):
        return sfft.rfftn(a, workers=self.workers)

    def interact(self, rho, which: int, rho_hat=None):
        """W_which applied to a real density; returns a real array."""
        if self.zero[which]:
            return np.zeros(rho.shape)
        if self.contact:
            return self.hats[which].flat[0] * rho
        if rho_hat is None:
            rho_hat = self.rfft(rho)
        return sfft.irfftn(self.rhats[which] * rho_hat, s=self.shape, workers=self.workers)

    def ip(self, f, g) -> complex:
        return complex(np.vdot(f, g) * self.dv)

    def rip(self, f, g) -> float:
        return float(np.vdot(f, g).real * self.dv)

    # -- functional --------------------------------------------------------

    def potentials(self, u, v):
        rho, sig = np.abs(u) ** 2, np.abs(v) ** 2
        z = self.zero
        rh = None if self.contact or (z[0] and z[2]) else self.rfft(rho)
        sh = None if self.contact or (z[1] and z[2]) else self.rfft(sig)
        return (
            self.interact(rho, 0, rh),
            self.interact(sig, 1, sh),
            self.interact(sig, 2, sh),  # W12 σ, seen by u
            self.interact(rho, 2, rh),  # W12 ρ, seen by v
        )

    def terms(self, u, v) -> dict:
        c1, c2 = self.spec.ratios
        w1r, w2s, w12s, _ = self.potentials(u, v)
        rho, sig = np.abs(u) ** 2, np.abs(v) ** 2
        kin = lambda f: self.rip(f, self.ifft(self.k2 * self.fft(f)))  # noqa: E731
        return {
            "kinetic_1": c1 * kin(u),
            "kinetic_2": c2 * kin(v),
            "trap_1": c1 * self.rip(rho, self.traps[0]),
            "trap_2": c2 * self.rip(sig, self.traps[1]),
            "interaction_1": 0.5 * c1 * c1 * self.rip(rho, w1r),
            "interaction_2": 0.5 * c2 * c2 * self.rip(sig, w2s),
            "interaction_12": c1 * c2 * self.rip(rho, w12s),
        }

    def energy(self, u, v) -> float:
        return float(sum(self.terms(u, v).values()))

    def hamiltonians(self, u, v, pots=None):
        """H1 u and H2 v, the Wirtinger gradients divided by c_i."""
        c1, c2 = self.spec.ratios
        w1r, w2s, w12s, w12r = pots if pots is not None else self.potentials(u, v)
        h1u = self.one_body(u, 0) + (c1 * w1r + c2 * w12s) * u
        h2v = self.one_body(v, 1) + (c2 * w2s + c1 * w12r) * v
        return h1u, h2v

    def residuals(self, u, v, pots=None):
        h1u, h2v = self.hamiltonians(u, v, pots)
        mu1 = self.ip(u, h1u).real / self.ip(u, u).real
        mu2 = self.ip(v, h2v).real / self.ip(v, v).real
        return h1u - mu1 * u, h2v - mu2 * v, (mu1, mu2), (h1u, h2v)


def _arrays(orbitals: OrbitalPair, spec: ModelSpec):
    if orbitals.grid != spec.grid:
        raise ValueError("orbitals and model live on different grids")
    orbitals.check_normalized()
    return orbitals.u.values, orbitals.v.values


def energy_terms(orbitals: OrbitalPair, spec: ModelSpec) -> dict:
    """The seven contributions (kinetic, trap, interaction per species and cross)."""
    u, v = _arrays(orbitals, spec)
    return _Engine(spec).terms(u, v)


def _energy(orbitals, spec, regime):
    if spec.regime != regime:
        raise ValueError(f"model is in the {spec.regime} regime, not {regime}")
    u, v = _arrays(orbitals, spec)
    return _Engine(spec).energy(u, v)


def gp_energy(orbitals: OrbitalPair, spec: ModelSpec) -> float:
    """Gross-Pitaevskii energy with contact couplings 8πa."""
    return _energy(orbitals, spec, "GP")


def hartree_energy(orbitals: OrbitalPair, spec: ModelSpec) -> float:
    """Hartree (mean-field) energy with convolution couplings."""
    return _energy(orbitals, spec, "MF")


def chemical_potentials(orbitals: OrbitalPair, spec: ModelSpec) -> tuple[float, float]:
    u, v = _arrays(orbitals, spec)
    return _Engine(spec).residuals(u, v)[2]


def meanfield_residual(orbitals: OrbitalPair, spec: ModelSpec) -> float:
    """||h1 u|| + ||h2 v|| with h_i the mean-field operator shifted by μ_i."""
    u, v = _arrays(orbitals, spec)
    eng = _Engine(spec)
    r1, r2, _, _ = eng.residuals(u, v)
    return float(np.sqrt(eng.rip(r1, r1)) + np.sqrt(eng.rip(r2, r2)))


def mean_field_operators(orbitals: OrbitalPair, spec: ModelSpec):
    """Callables applying h1 and h2 (already shifted by μ) to arrays."""
    u, v = _arrays(orbitals, spec)
    eng = _Engine(spec)
    c1, c2 = spec.ratios
    w1r, w2s, w12s, w12r = eng.potentials(u, v)
    _, _, (mu1, mu2), _ = eng.residuals(u, v)
    p1 = c1 * w1r + c2 * w12s - mu1
    p2 = c2 * w2s + c1 * w12r - mu2
    h1 = lambda f: eng.one_body(f, 0) + p1 * f  # noqa: E731
    h2 = lambda f: eng.one_body(f, 1) + p2 * f  # noqa: E731
    return h1, h2, (mu1, mu2)


def energy_gradient(u, v, spec: ModelSpec):
    """Wirtinger gradient of the unconstrained energy, ∂E/∂ū and ∂E/∂v̄.

    A first-order change is dE = 2 Re<δu, G_u> + 2 Re<δv, G_v>.
    Arguments may be SpectralFields or raw arrays and need not be normalized.
    """
    u = u.values if isinstance(u, SpectralField) else np.asarray(u, dtype=complex)
    v = v.values if isinstance(v, SpectralField) else np.asarray(v, dtype=complex)
    eng = _Engine(spec)
    h1u, h2v = eng.hamiltonians(u, v)
    return spec.c1 * h1u, spec.c2 * h2v


def _unconstrained_energy(u, v, spec: ModelSpec) -> float:
    u = u.values if isinstance(u, SpectralField) else np.asarray(u, dtype=complex)
    v = v.values if isinstance(v, SpectralField) else np.asarray(v, dtype=complex)
    return _Engine(spec).energy(u, v)


