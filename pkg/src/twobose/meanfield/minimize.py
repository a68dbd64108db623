"""Constrained minimization of the two-species functional.

Both species are kept on their unit spheres.  A search direction (d_u, d_v)
tangent to the spheres is followed along the retraction

    u(t) = (u + t d_u) / ||u + t d_u||,   v(t) likewise,

on which the energy is an explicit rational function of t: numerators and
denominators are polynomials of degree at most four whose coefficients cost
one batch of FFTs.  The energy change E(t) - E(0) is formed from these
coefficients with the constant term cancelled exactly, so descent can be
certified down to a relative level of about 1e-16 of the individual terms
instead of 1e-16 of the total energy.  Directions come either from the
preconditioned gradient alone ("flow", the normalized gradient flow with
Armijo backtracking) or from Polak-Ribière conjugation ("cg", default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import minimize_scalar

from ..grid import SpectralField
from .functional import _Engine
from .model import MinimizationReport, ModelSpec, OrbitalPair

__all__ = ["MinimizeOptions", "MinimizationError", "minimize", "initial_guess"]


class MinimizationError(RuntimeError):
    """Raised when the iteration cap is hit; carries the best report so far."""

    def __init__(self, message: str, report: MinimizationReport):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class MinimizeOptions:
    tol: float = 1e-8
    max_iter: int = 100_000
    method: str = "cg"
    armijo: float = 1e-4
    initial_step: float = 0.1
    refresh_every: int = 25
    workers: int | None = None

    def __post_init__(self):
        if self.method not in ("cg", "flow"):
            raise ValueError(f"method must be 'cg' or 'flow', got {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


def initial_guess(spec: ModelSpec, seed: int | None = None):
    """exp(-(U - min U)/2) per species, randomly perturbed when ``seed`` is given.

    For U = |x|² this is the exact oscillator ground state.
    """
    grid = spec.grid
    out = []
    rng = np.random.default_rng(seed) if seed is not None else None
    for trap in spec.traps:
        U = trap.values.real
        base = np.exp(-0.5 * (U - U.min()))
        if rng is not None:
            # smooth random complex modulation: low Fourier modes only
            coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            coeffs *= np.exp(-grid.k_squared * (grid.box_length / (2 * np.pi)) ** 2 / 4.0)
            noise = np.fft.ifftn(coeffs)
            noise /= np.max(np.abs(noise))
            base = base * (1.0 + 0.5 * noise) * np.exp(2j * np.pi * rng.random())
        base = base.astype(complex)
        base /= math.sqrt(np.vdot(base, base).real * grid.cell_volume)
        out.append(base)
    return out[0], out[1]


class _State:
    """Orbitals together with the quantities reused by the next line search."""

    def __init__(self, eng: _Engine, u, v):
        self.eng = eng
        self.u, self.v = u, v
        self.refresh()

    def refresh(self):
        eng = self.eng
        self.u = self.u / math.sqrt(eng.rip(self.u, self.u))
        self.v = self.v / math.sqrt(eng.rip(self.v, self.v))
        self.tu = eng.one_body(self.u, 0)
        self.tv = eng.one_body(self.v, 1)
        self.pots = list(eng.potentials(self.u, self.v))

    def gradient(self):
        eng = self.eng
        c1, c2 = eng.spec.ratios
        w1r, w2s, w12s, w12r = self.pots
        h1u = self.tu + (c1 * w1r + c2 * w12s) * self.u
        h2v = self.tv + (c2 * w2s + c1 * w12r) * self.v
        mu1 = eng.rip(self.u, h1u)
        mu2 = eng.rip(self.v, h2v)
        return h1u - mu1 * self.u, h2v - mu2 * self.v, (mu1, mu2)

    def energy(self) -> float:
        eng = self.eng
        c1, c2 = eng.spec.ratios
        w1r, w2s, w12s, _ = self.pots
        rho, sig = np.abs(self.u) ** 2, np.abs(self.v) ** 2
        return (
            c1 * eng.rip(self.u, self.tu)
            + c2 * eng.rip(self.v, self.tv)
            + 0.5 * c1 * c1 * eng.rip(rho, w1r)
            + 0.5 * c2 * c2 * eng.rip(sig, w2s)
            + c1 * c2 * eng.rip(rho, w12s)
        )


class _LineFunction:
    """Exact energy change along the retraction in direction (du, dv)."""

    def __init__(self, state: _State, du, dv):
        eng = state.eng
        c1, c2 = eng.spec.ratios
        u, v = state.u, state.v
        self.state, self.du, self.dv = state, du, dv
        self.tdu = eng.one_body(du, 0)
        self.tdv = eng.one_body(dv, 1)
        gu = np.array([eng.rip(u, u), 2 * eng.rip(u, du), eng.rip(du, du)])
        gv = np.array([eng.rip(v, v), 2 * eng.rip(v, dv), eng.rip(dv, dv)])
        qu = np.array([eng.rip(u, state.tu), 2 * eng.rip(du, state.tu), eng.rip(du, self.tdu)])
        qv = np.array([eng.rip(v, state.tv), 2 * eng.rip(dv, state.tv), eng.rip(dv, self.tdv)])
        rho = [np.abs(u) ** 2, 2 * (np.conj(u) * du).real, np.abs(du) ** 2]
        sig = [np.abs(v) ** 2, 2 * (np.conj(v) * dv).real, np.abs(dv) ** 2]
        w1r, w2s, w12s, w12r = state.pots
        zero = eng.zero
        # W applied to each density component; index 0 is already known.
        # Zero kernels are represented by None and skipped entirely.
        need_rho = not (zero[0] and zero[2])
        need_sig = not (zero[1] and zero[2])
        if eng.contact:
            rh = sh = [None] * 3
        else:
            rh = [None] + [eng.rfft(r) if need_rho else None for r in rho[1:]]
            sh = [None] + [eng.rfft(x) if need_sig else None for x in sig[1:]]

        def applied(w0, dens, hats, which):
            if zero[which]:
                return None
            return [w0] + [eng.interact(dens[j], which, hats[j]) for j in (1, 2)]

        self.w1 = applied(w1r, rho, rh, 0)
        self.w2 = applied(w2s, sig, sh, 1)
        self.w12s = applied(w12s, sig, sh, 2)
        self.w12r = applied(w12r, rho, rh, 2)

        def quartic(dens, w):
            out = np.zeros(5)
            if w is not None:
                for i in range(3):
                    for j in range(3):
                        out[i + j] += eng.rip(dens[i], w[j])
            return out

        i11 = quartic(rho, self.w1)
        i22 = quartic(sig, self.w2)
        i12 = quartic(rho, self.w12s)
        self.gu, self.gv = gu, gv
        # (numerator, denominator) pairs; E(t) = Σ num(t) / den(t)
        self.terms = [
            (c1 * qu, gu),
            (c2 * qv, gv),
            (0.5 * c1 * c1 * i11, P.polymul(gu, gu)),
            (0.5 * c2 * c2 * i22, P.polymul(gv, gv)),
            (c1 * c2 * i12, P.polymul(gu, gv)),
        ]
        self.delta_numerators = []
        for num, den in self.terms:
            n = len(num)
            # num(t) den(0) - num(0) den(t), constant term removed
            coef = num * den[0] - num[0] * den[:n]
            self.delta_numerators.append(coef[1:])
        self.slope = sum(coef[0] / (den[0] * den[0]) for coef, (_, den) in zip(self.delta_numerators, self.terms))

    def delta(self, t: float) -> float:
        total = 0.0
        for coef, (_, den) in zip(self.delta_numerators, self.terms):
            dt = P.polyval(t, den)
            total += t * P.polyval(t, coef) / (dt * den[0])
        return float(total)

    def advance(self, t: float) -> None:
        """Move the state to u(t), v(t), updating cached products in place."""
        s = self.state
        nu = math.sqrt(P.polyval(t, self.gu))
        nv = math.sqrt(P.polyval(t, self.gv))
        s.u = (s.u + t * self.du) / nu
        s.v = (s.v + t * self.dv) / nv
        s.tu = (s.tu + t * self.tdu) / nu
        s.tv = (s.tv + t * self.tdv) / nv
        wu, wv = nu * nu, nv * nv
        def comb(w, old, norm):
            return old if w is None else (w[0] + t * w[1] + t * t * w[2]) / norm

        s.pots = [
            comb(self.w1, s.pots[0], wu),
            comb(self.w2, s.pots[1], wv),
            comb(self.w12s, s.pots[2], wv),
            comb(self.w12r, s.pots[3], wu),
        ]


def _exact_line_min(line: _LineFunction, t_ref: float):
    ts = t_ref * 2.0 ** np.arange(-40, 21)
    vals = np.array([line.delta(t) for t in ts])
    k = int(np.argmin(vals))
    if vals[k] >= 0.0:
        return 0.0, 0.0
    lo = ts[k - 1] if k > 0 else 0.0
    hi = ts[k + 1] if k + 1 < len(ts) else ts[k] * 2.0
    res = minimize_scalar(line.delta, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12 * hi})
    if res.fun < vals[k]:
        return float(res.x), float(res.fun)
    return float(ts[k]), float(vals[k])


def _armijo(line: _LineFunction, t0: float, c: float):
    t = t0
    for _ in range(80):
        d = line.delta(t)
        if d <= c * t * line.slope and d < 0.0:
            return t, d
        t *= 0.5
    return 0.0, 0.0


def _project(eng, f, base):
    return f - eng.ip(base, f) * base


def _phase_fix(f):
    total = f.sum()
    if abs(total) == 0.0:
        return f
    return f * (abs(total) / total)


def minimize(spec: ModelSpec, seed: int | None = None, options: MinimizeOptions | None = None,
             initial: OrbitalPair | None = None, **kwargs) -> MinimizationReport:
    """Minimize the functional of ``spec`` over normalized pairs.

    Keyword arguments override fields of ``options``.  Raises
    MinimizationError (with the best report attached) when the iteration cap
    is reached or descent stalls above tolerance.
    """
    options = replace(options or MinimizeOptions(), **kwargs)
    eng = _Engine(spec, workers=options.workers)
    c1, c2 = spec.ratios
    if initial is not None:
        u0, v0 = initial.u.values.copy(), initial.v.values.copy()
    else:
        u0, v0 = initial_guess(spec, seed)
    state = _State(eng, u0, v0)
    k2 = spec.grid.k_squared

    energy = state.energy()
    energies = [energy]
    r1, r2, mus = state.gradient()
    resid = math.sqrt(eng.rip(r1, r1)) + math.sqrt(eng.rip(r2, r2))
    residuals = [resid]
    d_prev = None
    gz_prev = None
    g_prev = None
    step = options.initial_step
    it = 0
    stalled = 0
    while resid >= options.tol and it < options.max_iter:
        it += 1
        # preconditioned gradient, Hessian scale c_α removed per species
        s1 = max(eng.rip(state.u, state.tu), 1e-3)
        s2 = max(eng.rip(state.v, state.tv), 1e-3)
        z1 = _project(eng, eng.ifft(eng.fft(2.0 * r1) / (k2 + s1)), state.u)
        z2 = _project(eng, eng.ifft(eng.fft(2.0 * r2) / (k2 + s2)), state.v)
        g1, g2 = 2.0 * c1 * r1, 2.0 * c2 * r2
        gz = eng.rip(g1, z1) + eng.rip(g2, z2)
        if options.method == "cg" and d_prev is not None and gz_prev > 0 and stalled == 0:
            beta = (eng.rip(g1 - g_prev[0], z1) + eng.rip(g2 - g_prev[1], z2)) / gz_prev
            beta = max(beta, 0.0)
            d1 = -z1 + beta * _project(eng, d_prev[0], state.u)
            d2 = -z2 + beta * _project(eng, d_prev[1], state.v)
            if eng.rip(g1, d1) + eng.rip(g2, d2) >= 0.0:
                d1, d2 = -z1, -z2
        else:
            d1, d2 = -z1, -z2

        line = _LineFunction(state, d1, d2)
        if options.method == "cg":
            t_ref = 1.0 / math.sqrt(max(line.gu[2], line.gv[2], 1e-300))
            t, dE = _exact_line_min(line, min(t_ref, 1.0))
        else:
            t, dE = _armijo(line, step, options.armijo)
            if t > 0.0:
                step = min(2.0 * t, 1e3)

        if t == 0.0 or not dE < 0.0:
            if stalled or d_prev is None:
                break
            stalled = 1
            d_prev = None
            r1, r2, mus = state.gradient()
            continue
        stalled = 0
        line.advance(t)
        if it % options.refresh_every == 0:
            state.refresh()
        energy = energy + dE
        energies.append(energy)
        d_prev = (d1, d2)
        g_prev = (g1, g2)
        gz_prev = gz
        r1, r2, mus = state.gradient()
        resid = math.sqrt(eng.rip(r1, r1)) + math.sqrt(eng.rip(r2, r2))
        residuals.append(resid)

    state.refresh()
    r1, r2, mus = state.gradient()
    resid = math.sqrt(eng.rip(r1, r1)) + math.sqrt(eng.rip(r2, r2))
    u = _phase_fix(state.u)
    v = _phase_fix(state.v)
    orbitals = OrbitalPair(SpectralField(spec.grid, u), SpectralField(spec.grid, v))
    converged = resid < options.tol
    report = MinimizationReport(
        orbitals=orbitals,
        energy=float(state.energy()),
        residual=float(resid),
        iterations=it,
        energy_trace=np.asarray(energies),
        residual_trace=np.asarray(residuals),
        multipliers=(float(mus[0]), float(mus[1])),
        converged=converged,
        regime=spec.regime,
        scattering_provenance=spec.scattering_provenance if spec.regime == "GP" else None,
    )
    if not converged:
        why = "iteration cap reached" if it >= options.max_iter else "descent stalled"
        raise MinimizationError(
            f"{why} after {it} iterations with residual {resid:.3e} (tol {options.tol:.1e})", report
        )
    return report
