"""Model description for the two-component mean-field problems."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ..grid import Grid, SpectralField, kernel_transform
from ..scattering import RadialPotential, load_potential_csv, scattering_length

__all__ = [
    "ModelSpec",
    "OrbitalPair",
    "MinimizationReport",
    "ModelError",
    "NormalizationError",
    "trap_from_config",
    "potential_from_config",
]

REGIMES = ("GP", "MF")


class ModelError(ValueError):
    """Invalid model ingredients."""


class NormalizationError(ValueError):
    """Orbitals are not L2-normalized."""


def _as_real_field(grid: Grid, value, name: str) -> SpectralField:
    if value is None:
        return SpectralField(grid, np.zeros(grid.shape))
    if isinstance(value, RadialPotential):
        return grid.sample_radial(value)
    if isinstance(value, SpectralField):
        if value.grid != grid:
            raise ModelError(f"{name} lives on a different grid")
        field_ = value
    else:
        field_ = SpectralField(grid, np.asarray(value))
    if np.max(np.abs(field_.values.imag)) > 1e-12 * max(1.0, np.max(np.abs(field_.values))):
        raise ModelError(f"{name} must be real-valued")
    return field_.with_values(field_.values.real)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Traps, interactions and population ratios of the two species.

    ``interactions`` holds (V1, V2, V12) sampled on the grid as radial
    fields; in the GP regime the functional uses ``scattering_lengths``
    instead and the sampled potentials only serve to compute them.
    """

    grid: Grid
    traps: tuple = (None, None)
    interactions: tuple = (None, None, None)
    ratios: tuple = (0.5, 0.5)
    regime: str = "MF"
    scattering_lengths: tuple | None = None
    scattering_provenance: str = "supplied"
    radial_potentials: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ModelError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        c1, c2 = (float(c) for c in self.ratios)
        if not (0.0 < c1 < 1.0 and 0.0 < c2 < 1.0):
            raise ModelError(f"population ratios must lie in (0, 1), got {(c1, c2)}")
        if abs(c1 + c2 - 1.0) > 1e-12:
            raise ModelError(f"population ratios must sum to 1, got {c1 + c2}")
        object.__setattr__(self, "ratios", (c1, c2))
        traps = tuple(_as_real_field(self.grid, t, f"trap {i + 1}") for i, t in enumerate(self.traps))
        if len(traps) != 2:
            raise ModelError("need exactly two traps")
        object.__setattr__(self, "traps", traps)
        if len(self.interactions) != 3:
            raise ModelError("need interactions (V1, V2, V12)")
        radial = tuple(v if isinstance(v, RadialPotential) else None for v in self.interactions)
        if any(r is not None for r in radial) and self.radial_potentials is None:
            object.__setattr__(self, "radial_potentials", radial)
        inters = tuple(
            _as_real_field(self.grid, v, name) for v, name in zip(self.interactions, ("V1", "V2", "V12"))
        )
        object.__setattr__(self, "interactions", inters)
        if self.regime == "GP":
            if self.scattering_lengths is None:
                if self.radial_potentials is None or any(r is None for r in self.radial_potentials):
                    raise ModelError("GP regime needs scattering lengths or radial potentials")
                lengths = tuple(scattering_length(r).a for r in self.radial_potentials)
                object.__setattr__(self, "scattering_lengths", lengths)
                object.__setattr__(self, "scattering_provenance", "computed")
            a = tuple(float(x) for x in self.scattering_lengths)
            if len(a) != 3:
                raise ModelError("need scattering lengths (a1, a2, a12)")
            if a[0] < 0 or a[1] < 0:
                raise ModelError("intra-species scattering lengths must be nonnegative")
            object.__setattr__(self, "scattering_lengths", a)

    @property
    def c1(self) -> float:
        return self.ratios[0]

    @property
    def c2(self) -> float:
        return self.ratios[1]

    @cached_property
    def kernel_transforms(self) -> tuple:
        """Fourier multipliers of the interaction operators ρ -> W ρ.

        MF: V-hat on the lattice.  GP: the contact strength 8πa, constant.
        """
        if self.regime == "GP":
            return tuple(np.full(self.grid.shape, 8.0 * math.pi * a) for a in self.scattering_lengths)
        return tuple(kernel_transform(v.values.real, self.grid) for v in self.interactions)

    @cached_property
    def interaction_is_zero(self) -> tuple:
        if self.regime == "GP":
            return tuple(a == 0.0 for a in self.scattering_lengths)
        return tuple(not np.any(v.values) for v in self.interactions)

    def fourier_interactions(self) -> tuple:
        """Real parts of the lattice Fourier transforms of V1, V2, V12."""
        return tuple(np.real(k) for k in self.kernel_transforms)

    def scaled(self, lam: float) -> "ModelSpec":
        """Multiply traps and interactions (or scattering lengths) by ``lam``."""
        kwargs = dict(
            grid=self.grid,
            traps=tuple(t * lam for t in self.traps),
            interactions=tuple(v * lam for v in self.interactions),
            ratios=self.ratios,
            regime=self.regime,
        )
        if self.regime == "GP":
            kwargs["scattering_lengths"] = tuple(a * lam for a in self.scattering_lengths)
        return ModelSpec(**kwargs)

    def check_confining(self, margin: float = 1.0) -> bool:
        """Trap values on the outer 10% shell exceed the central minimum by ``margin``."""
        L = self.grid.box_length
        coords = self.grid.coordinates
        shell = np.zeros(self.grid.shape, dtype=bool)
        for c in coords:
            shell |= np.abs(c) >= 0.4 * L
        centre = self.grid.radius <= 0.1 * L
        return all(
            float(t.real[shell].min()) - float(t.real[centre].min()) >= margin for t in self.traps
        )

    def check_fourier_positivity(self, tol: float = 1e-10) -> bool:
        v1, v2, _ = self.fourier_interactions()
        scale = max(1.0, np.max(np.abs(v1)), np.max(np.abs(v2)))
        return bool(v1.min() >= -tol * scale and v2.min() >= -tol * scale)

    def validate(self, strict: bool = False, margin: float = 1.0) -> list[str]:
        """Assumption checks; returns the failed ones, raising if ``strict``."""
        problems = []
        if not self.check_confining(margin):
            problems.append("traps are not confining on the outer shell of the box")
        if self.regime == "MF" and not self.check_fourier_positivity():
            problems.append("Fourier transforms of V1, V2 are not pointwise nonnegative")
        from .checks import miscibility_gp, miscibility_mf

        ok = miscibility_gp(*self.scattering_lengths) if self.regime == "GP" else miscibility_mf(self)
        if not ok:
            problems.append("miscibility condition fails")
        if problems and strict:
            raise ModelError("; ".join(problems))
        for p in problems:
            warnings.warn(p, stacklevel=2)
        return problems

    # -- JSON ----------------------------------------------------------------

    @classmethod
    def from_config(cls, cfg: dict, base_dir: Path | None = None) -> "ModelSpec":
        g = cfg["grid"]
        grid = Grid(int(g["dim"]), int(g["points"]), float(g["length"]))
        traps = tuple(trap_from_config(grid, t) for t in cfg.get("traps", [{"kind": "zero"}] * 2))
        inter_cfg = cfg.get("interactions", {})
        radial = tuple(
            potential_from_config(inter_cfg.get(name, {"kind": "zero"}), base_dir)
            for name in ("V1", "V2", "V12")
        )
        lengths = cfg.get("scattering_lengths")
        return cls(
            grid=grid,
            traps=traps,
            interactions=radial,
            ratios=tuple(cfg["ratios"]),
            regime=cfg.get("regime", "MF"),
            scattering_lengths=tuple(lengths) if lengths is not None else None,
        )

    def to_dict(self) -> dict:
        out = {"grid": self.grid.to_dict(), "ratios": list(self.ratios), "regime": self.regime}
        if self.scattering_lengths is not None:
            out["scattering_lengths"] = list(self.scattering_lengths)
            out["scattering_provenance"] = self.scattering_provenance
        return out


def trap_from_config(grid: Grid, cfg: dict) -> SpectralField:
    kind = cfg.get("kind", "harmonic")
    if kind == "zero":
        return SpectralField(grid, np.zeros(grid.shape))
    if kind == "harmonic":
        strengths = cfg.get("strengths")
        if strengths is None:
            strengths = [float(cfg.get("strength", 1.0))] * grid.dim
        centre = cfg.get("center", [0.0] * grid.dim)
        if len(strengths) != grid.dim or len(centre) != grid.dim:
            raise ModelError("harmonic trap strengths/center must have one entry per axis")
        values = sum(s * (x - c) ** 2 for s, x, c in zip(strengths, grid.coordinates, centre))
        return SpectralField(grid, values)
    raise ModelError(f"unknown trap kind {kind!r}")


def potential_from_config(cfg: dict, base_dir: Path | None = None) -> RadialPotential:
    kind = cfg.get("kind", "zero")
    resolution = int(cfg.get("resolution", 4000))
    if kind == "zero":
        return RadialPotential.zero()
    if kind == "gaussian":
        g, s = float(cfg["strength"]), float(cfg["width"])
        cutoff = float(cfg.get("cutoff", 10.0 * s))
        return RadialPotential.from_function(lambda r: g * np.exp(-0.5 * (r / s) ** 2), cutoff, resolution)
    if kind == "barrier":
        h, R = float(cfg["height"]), float(cfg["radius"])
        return RadialPotential.from_function(lambda r: np.where(r < R, h, 0.0), R, resolution)
    if kind == "csv":
        path = Path(cfg["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_potential_csv(path)
    raise ModelError(f"unknown potential kind {kind!r}")


@dataclass(frozen=True, eq=False)
class OrbitalPair:
    u: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.u.grid != self.v.grid:
            raise ModelError("orbitals live on different grids")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def check_normalized(self, tol: float = 1e-10) -> None:
        dv = self.grid.cell_volume
        for name, f in (("u", self.u), ("v", self.v)):
            norm = math.sqrt(float(np.vdot(f.values, f.values).real * dv))
            if abs(norm - 1.0) > tol:
                raise NormalizationError(f"orbital {name} has L2 norm {norm:.12g}, expected 1")

    def boundary_amplitude(self) -> float:
        """Largest |field| on the box faces relative to its peak."""
        out = 0.0
        for f in (self.u, self.v):
            a = np.abs(f.values)
            face = 0.0
            for ax in range(self.grid.dim):
                face = max(face, float(np.take(a, 0, axis=ax).max()))
            out = max(out, face / float(a.max()))
        return out


@dataclass(frozen=True, eq=False)
class MinimizationReport:
    orbitals: OrbitalPair
    energy: float
    residual: float
    iterations: int
    energy_trace: np.ndarray = field(repr=False)
    residual_trace: np.ndarray = field(repr=False)
    multipliers: tuple = (0.0, 0.0)
    converged: bool = True
    regime: str = "MF"
    scattering_provenance: str | None = None

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "multipliers": list(self.multipliers),
            "regime": self.regime,
            "scattering_provenance": self.scattering_provenance,
            "boundary_amplitude": self.orbitals.boundary_amplitude(),
        }
