"""Second-order (Bogoliubov) theory around the Hartree minimizer.

All excited modes are real, so the pairing block is a real symmetric matrix
and complex conjugation on the mode space is the identity.  Tensor indices
follow

    V_{mnpq} = ∫∫ conj(u_m(x)) conj(u_n(y)) V(x - y) u_p(x) u_q(y),

with species-1 modes in slots (m, p) and species-2 modes in slots (n, q) for
the cross tensor V12.  Mode 0 of each species is the condensate.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, lobpcg
from sklearn.base import BaseEstimator

from ._binary import read_blob, write_blob
from ._validation import check_int, check_is_fitted, check_positive
from .fock.quadratic import TruncatedFock, quadratic_operator
from .grid import SpectralField
from .meanfield.functional import _Engine, mean_field_operators, meanfield_residual
from .meanfield.model import ModelSpec, OrbitalPair

__all__ = [
    "ModeBasis",
    "InteractionTensor",
    "QuadraticBlocks",
    "BogoliubovSpectrum",
    "BogoliubovError",
    "build_mode_basis",
    "interaction_tensor",
    "assemble_hessian",
    "hessian_bottom",
    "hessian_interaction_block",
    "assemble_bogoliubov",
    "blocks_from_tensors",
    "diagonalize_quadratic",
    "sandwich_bounds_check",
    "find_sandwich_constant",
    "toy_model_from_basis",
    "BogoliubovModel",
    "save_tensor",
    "load_tensor",
]

DENSE_LIMIT = 1024


class BogoliubovError(RuntimeError):
    """Hypothesis violation or failed eigensolve."""


# -- mode basis ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Condensates plus real excited modes; ``modes1[0]`` is u0, ``modes2[0]`` is v0.

    Arrays have shape (M+1, *grid.shape) and are L2-normalized on the grid.
    ``energies1``/``energies2`` are the eigenvalues of h^(1), h^(2) on the
    excited modes.
    """

    grid: object
    modes1: np.ndarray = field(repr=False)
    modes2: np.ndarray = field(repr=False)
    energies1: np.ndarray
    energies2: np.ndarray
    multipliers: tuple = (0.0, 0.0)

    @property
    def M1(self) -> int:
        return self.modes1.shape[0] - 1

    @property
    def M2(self) -> int:
        return self.modes2.shape[0] - 1

    def gram(self, species: int) -> np.ndarray:
        m = self.modes1 if species == 1 else self.modes2
        flat = m.reshape(m.shape[0], -1)
        return flat @ flat.T * self.grid.cell_volume

    def field(self, species: int, index: int) -> SpectralField:
        m = self.modes1 if species == 1 else self.modes2
        return SpectralField(self.grid, m[index])

    def truncated(self, M1: int, M2: int) -> "ModeBasis":
        return ModeBasis(self.grid, self.modes1[: M1 + 1], self.modes2[: M2 + 1],
                         self.energies1[:M1], self.energies2[:M2], self.multipliers)

    def mixed(self, W1: np.ndarray, W2: np.ndarray) -> "ModeBasis":
        """Rotate the excited modes of each species by orthogonal matrices."""
        def rot(m, W):
            flat = m[1:].reshape(m.shape[0] - 1, -1)
            return np.concatenate([m[:1], (W.T @ flat).reshape(m[1:].shape)])
        return ModeBasis(self.grid, rot(self.modes1, W1), rot(self.modes2, W2),
                         self.energies1, self.energies2, self.multipliers)


def _real_condensate(f: SpectralField, name: str) -> np.ndarray:
    values = f.values
    scale = np.max(np.abs(values))
    if np.max(np.abs(values.imag)) > 1e-6 * scale:
        raise BogoliubovError(f"condensate {name} is not real after phase fixing")
    out = values.real.copy()
    return out / math.sqrt(np.dot(out.ravel(), out.ravel()) * f.grid.cell_volume)


def _dense_operator(apply, n: int, shape) -> np.ndarray:
    eye = np.eye(n).reshape((n,) + tuple(shape))
    cols = np.stack([apply(e).real.ravel() for e in eye], axis=1)
    return 0.5 * (cols + cols.T)


def _lowest_modes(apply, base: np.ndarray, count: int, grid, seed: int = 0):
    """Lowest eigenpairs of a real symmetric operator on base^⊥."""
    n = base.size
    b = base.ravel() / np.linalg.norm(base)
    if n <= DENSE_LIMIT:
        H = _dense_operator(apply, n, grid.shape)
        # orthonormal complement of b through a Householder reflector
        Q, _ = np.linalg.qr(np.column_stack([b, np.eye(n)[:, : n - 1]]))
        if Q[:, 0] @ b < 0:
            Q[:, 0] = -Q[:, 0]
        P = Q[:, 1:]
        vals, vecs = np.linalg.eigh(P.T @ H @ P)
        vecs = P @ vecs[:, :count]
        return vals[:count], vecs.T
    k2 = grid.k_squared
    shape = grid.shape

    def matvec(X):
        X = np.asarray(X)
        if X.ndim == 1:
            return apply(X.reshape(shape)).real.ravel()
        return np.stack([apply(c.reshape(shape)).real.ravel() for c in X.T], axis=1)

    def precond(X):
        X = np.asarray(X)
        one = X.ndim == 1
        X = X.reshape(n, -1)
        out = np.stack([sfft.ifftn(sfft.fftn(c.reshape(shape)) / (k2 + 1.0)).real.ravel() for c in X.T], axis=1)
        return out[:, 0] if one else out

    extra = min(count + 4, n - 2)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, extra))
    A = LinearOperator((n, n), matvec=matvec, matmat=matvec, dtype=float)
    Mop = LinearOperator((n, n), matvec=precond, matmat=precond, dtype=float)
    with warnings.catch_warnings():
        # residuals are checked below against our own threshold
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(A, X, M=Mop, Y=b[:, None], largest=False, tol=1e-9, maxiter=2000)
    order = np.argsort(vals)
    vals, vecs = vals[order][:count], vecs[:, order][:, :count]
    res = np.linalg.norm(matvec(vecs) - vecs * vals, axis=0)
    if np.any(res > 1e-6 * max(1.0, np.max(np.abs(vals)))):
        raise BogoliubovError(f"mode eigensolver did not converge (max residual {res.max():.2e})")
    return vals, vecs.T


def build_mode_basis(minimizer: OrbitalPair, spec: ModelSpec, M1: int, M2: int,
                     residual_tol: float = 1e-6) -> ModeBasis:
    """Lowest M1 (M2) eigenmodes of h^(1) (h^(2)) orthogonal to u0 (v0)."""
    check_int(M1, "M1", 1)
    check_int(M2, "M2", 1)
    res = meanfield_residual(minimizer, spec)
    if res > residual_tol:
        raise BogoliubovError(f"minimizer residual {res:.2e} exceeds {residual_tol:.0e}")
    grid = spec.grid
    u0 = _real_condensate(minimizer.u, "u0")
    v0 = _real_condensate(minimizer.v, "v0")
    pair = OrbitalPair(SpectralField(grid, u0), SpectralField(grid, v0))
    h1, h2, mus = mean_field_operators(pair, spec)
    if max(M1, M2) >= grid.size - 1:
        raise ValueError("more modes requested than grid points")
    e1, m1 = _lowest_modes(h1, u0, M1, grid, seed=1)
    e2, m2 = _lowest_modes(h2, v0, M2, grid, seed=2)
    norm = 1.0 / math.sqrt(grid.cell_volume)

    def stack(base, vecs):
        vecs = vecs * norm
        # deterministic sign: largest-magnitude entry positive
        for k in range(vecs.shape[0]):
            j = np.argmax(np.abs(vecs[k]))
            if vecs[k, j] < 0:
                vecs[k] = -vecs[k]
        return np.concatenate([base[None], vecs.reshape((-1,) + grid.shape)])

    return ModeBasis(grid, stack(u0, m1), stack(v0, m2), np.asarray(e1), np.asarray(e2), tuple(mus))


# -- interaction tensors -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InteractionTensor:
    V1: np.ndarray = field(repr=False)
    V2: np.ndarray = field(repr=False)
    V12: np.ndarray = field(repr=False)

    @property
    def dims(self) -> tuple[int, int]:
        return self.V1.shape[0], self.V2.shape[0]

    def hermiticity_error(self) -> float:
        """max |V_{mnpq} - conj(V_{pqmn})| over all three tensors."""
        err = 0.0
        for V in (self.V1, self.V2, self.V12):
            err = max(err, float(np.max(np.abs(V - V.transpose(2, 3, 0, 1).conj()))))
        return err

    def exchange_error(self) -> float:
        """max |V_{mnpq} - V_{nmqp}| on the intra-species tensors."""
        return max(float(np.max(np.abs(V - V.transpose(1, 0, 3, 2)))) for V in (self.V1, self.V2))


def _pair_tensor(left: np.ndarray, right: np.ndarray, hat, grid) -> np.ndarray:
    """T_{mnpq} = ∫∫ conj(l_m(x)) conj(r_n(y)) V(x-y) l_p(x) r_q(y)."""
    dl, dr = left.shape[0], right.shape[0]
    dv = grid.cell_volume
    axes = tuple(range(-grid.dim, 0))
    Ly = np.conj(right)[:, None] * right[None, :]  # (n, q, grid)
    if np.isscalar(hat) or np.ndim(hat) == 0:
        conv = hat * Ly
    else:
        conv = sfft.ifftn(hat * sfft.fftn(Ly, axes=axes), axes=axes)
    Lx = np.conj(left)[:, None] * left[None, :]  # (m, p, grid)
    A = Lx.reshape(dl * dl, -1)
    B = conv.reshape(dr * dr, -1)
    T = (A @ B.T) * dv  # ((m,p), (n,q))
    return T.reshape(dl, dl, dr, dr).transpose(0, 2, 1, 3)


def interaction_tensor(basis: ModeBasis, spec: ModelSpec) -> InteractionTensor:
    """All V1, V2, V12 entries over the mode basis including the condensates."""
    if basis.grid != spec.grid:
        raise ValueError("mode basis and model live on different grids")
    eng = _Engine(spec)
    hats = []
    for k in range(3):
        if eng.zero[k]:
            hats.append(0.0)
        elif eng.contact:
            hats.append(float(eng.hats[k].flat[0]))
        else:
            hats.append(eng.hats[k])
    m1 = basis.modes1.astype(complex)
    m2 = basis.modes2.astype(complex)
    return InteractionTensor(
        _pair_tensor(m1, m1, hats[0], spec.grid),
        _pair_tensor(m2, m2, hats[1], spec.grid),
        _pair_tensor(m1, m2, hats[2], spec.grid),
    )


_MAGIC = b"TBTENSOR"


def save_tensor(tensor: InteractionTensor, path, meta: dict | None = None) -> None:
    """Write V1, V2, V12 as '<c16' arrays with an index header (docs/formats.md)."""
    header = {
        "format": "twobose-tensor",
        "version": 1,
        "index_convention": "V[m,n,p,q] = <e_m (x) f_n, V e_p (x) f_q>; species-1 slots (m,p)",
        "order": "C",
        "meta": meta or {},
    }
    arrays = {k: np.asarray(getattr(tensor, k), dtype=complex) for k in ("V1", "V2", "V12")}
    write_blob(path, _MAGIC, header, arrays)


def load_tensor(path) -> tuple[InteractionTensor, dict]:
    header, arrays = read_blob(path, _MAGIC)
    return InteractionTensor(arrays["V1"], arrays["V2"], arrays["V12"]), header


# -- quadratic blocks ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadraticBlocks:
    B1: np.ndarray
    B2: np.ndarray
    constant: float
    M1: int
    M2: int
    h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.B1.shape != self.B2.shape or self.B1.shape[0] != self.B1.shape[1]:
            raise ValueError("B1 and B2 must be square matrices of the same size")

    @property
    def size(self) -> int:
        return self.B1.shape[0]

    def symmetry_errors(self) -> tuple[float, float]:
        return (float(np.max(np.abs(self.B1 - self.B1.conj().T))), float(np.max(np.abs(self.B2 - self.B2.T))))

    def pairing_strength(self) -> float:
        """||B1^{-1/2} B2 B1^{-1/2}||; requires B1 > 0."""
        w, U = np.linalg.eigh(self.B1)
        if w.min() <= 0:
            return math.inf
        s = U @ np.diag(w**-0.5) @ U.conj().T
        return float(np.linalg.norm(s @ self.B2 @ s, 2))

    def hessian(self) -> np.ndarray:
        return np.block([[self.B1, self.B2], [self.B2.conj(), self.B1.conj()]])

    def to_dict(self) -> dict:
        return {
            "B1": np.real(self.B1).tolist(),
            "B2": np.real(self.B2).tolist(),
            "constant": self.constant,
            "M1": self.M1,
            "M2": self.M2,
        }


def _one_body(basis: ModeBasis, spec: ModelSpec):
    eng = _Engine(spec)
    dv = spec.grid.cell_volume

    def mat(modes, species):
        flat = modes.reshape(modes.shape[0], -1)
        applied = np.stack([eng.one_body(m.astype(complex), species).real.ravel() for m in modes])
        T = flat @ applied.T * dv
        return 0.5 * (T + T.T)

    return mat(basis.modes1, 0), mat(basis.modes2, 1)


def blocks_from_tensors(T1, T2, tensor: InteractionTensor, c1: float, c2: float,
                        mu: tuple | None = None) -> QuadraticBlocks:
    """Quadratic blocks from one-body matrices and tensors in a mode basis.

    Inputs include mode 0 of each species.  ``mu`` defaults to the Hartree
    multipliers evaluated from these matrices.
    """
    V1, V2, V12 = tensor.V1, tensor.V2, tensor.V12
    T1, T2 = np.asarray(T1), np.asarray(T2)
    mf1 = T1 + c1 * V1[:, 0, :, 0] + c2 * V12[:, 0, :, 0]
    mf2 = T2 + c2 * V2[:, 0, :, 0] + c1 * V12[0, :, 0, :]
    if mu is None:
        mu = (float(mf1[0, 0].real), float(mf2[0, 0].real))
    h1 = (mf1 - mu[0] * np.eye(len(T1)))[1:, 1:]
    h2 = (mf2 - mu[1] * np.eye(len(T2)))[1:, 1:]
    s = math.sqrt(c1 * c2)
    K1 = c1 * V1[1:, 0, 0, 1:]
    K2 = c2 * V2[1:, 0, 0, 1:]
    K12 = s * V12[1:, 0, 0, 1:]
    P1 = c1 * V1[1:, 1:, 0, 0]
    P2 = c2 * V2[1:, 1:, 0, 0]
    P12 = s * V12[1:, 1:, 0, 0]
    B1 = np.block([[h1 + K1, K12], [K12.conj().T, h2 + K2]])
    B2 = np.block([[P1, P12], [P12.T, P2]])
    h = sla.block_diag(h1, h2)
    if np.max(np.abs(B1.imag)) < 1e-14 and np.max(np.abs(B2.imag)) < 1e-14:
        B1, B2, h = B1.real, B2.real, h.real
    B1 = 0.5 * (B1 + B1.conj().T)
    B2 = 0.5 * (B2 + B2.T)
    constant = float((-0.5 * c1 * V1[0, 0, 0, 0] - 0.5 * c2 * V2[0, 0, 0, 0]).real)
    return QuadraticBlocks(B1, B2, constant, h1.shape[0], h2.shape[0], h)


def assemble_bogoliubov(minimizer: OrbitalPair, spec: ModelSpec, basis: ModeBasis,
                        tensor: InteractionTensor | None = None, residual_tol: float = 1e-6) -> QuadraticBlocks:
    res = meanfield_residual(minimizer, spec)
    if res > residual_tol:
        raise BogoliubovError(f"minimizer residual {res:.2e} exceeds {residual_tol:.0e}; blocks need a minimizer")
    tensor = tensor if tensor is not None else interaction_tensor(basis, spec)
    T1, T2 = _one_body(basis, spec)
    return blocks_from_tensors(T1, T2, tensor, spec.c1, spec.c2, mu=basis.multipliers)


def assemble_hessian(minimizer: OrbitalPair, spec: ModelSpec, basis: ModeBasis,
                     tensor: InteractionTensor | None = None, residual_tol: float = 1e-6) -> np.ndarray:
    """[[B1, B2], [conj B2, conj B1]] in the weighted mode coordinates."""
    return assemble_bogoliubov(minimizer, spec, basis, tensor, residual_tol).hessian()


def hessian_bottom(hessian) -> float:
    H = hessian.hessian() if isinstance(hessian, QuadraticBlocks) else np.asarray(hessian)
    return float(np.linalg.eigvalsh(0.5 * (H + H.conj().T))[0])


def hessian_interaction_block(blocks: QuadraticBlocks) -> np.ndarray:
    """The Hessian with the one-body part h removed."""
    if blocks.h is None:
        raise ValueError("blocks carry no one-body part")
    K1 = blocks.B1 - blocks.h
    return np.block([[K1, blocks.B2], [blocks.B2.conj(), K1.conj()]])


# -- diagonalization ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BogoliubovSpectrum:
    xi: np.ndarray
    ground_energy: float

    def excitation_levels(self, count: int) -> np.ndarray:
        """Lowest ``count`` values of Σ n_i xi_i, i.e. levels above the ground energy."""
        xi = np.sort(self.xi)[:count]
        occ = np.array(list(itertools.product(range(count), repeat=xi.size)))
        return np.sort(occ @ xi)[:count]

    def to_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "ground_energy": self.ground_energy}


def _sqrtm_psd(A):
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    return U @ np.diag(np.sqrt(np.clip(w, 0, None))) @ U.conj().T


def diagonalize_quadratic(blocks: QuadraticBlocks, hypothesis_tol: float = 1e-12) -> BogoliubovSpectrum:
    """Symplectic eigenvalues xi and inf σ of the quadratic Hamiltonian."""
    B1, B2 = blocks.B1, blocks.B2
    bottom = float(np.linalg.eigvalsh(B1)[0])
    if bottom <= hypothesis_tol:
        raise BogoliubovError(f"hypothesis B1 > 0 fails: smallest eigenvalue {bottom:.3e}")
    strength = blocks.pairing_strength()
    if not strength < 1.0 - hypothesis_tol:
        raise BogoliubovError(f"hypothesis ||B1^-1/2 B2 B1^-1/2|| < 1 fails: norm {strength:.6f}")
    if np.iscomplexobj(B2) and np.max(np.abs(B2.imag)) > 0:
        # general complex pairing: diagonalize the dynamical matrix
        n = B1.shape[0]
        D = np.block([[B1, B2], [-B2.conj(), -B1.conj()]])
        ev = np.sort(np.linalg.eigvals(D).real)
        xi = ev[n:]
    else:
        S = _sqrtm_psd(B1 - B2)
        xi = np.sqrt(np.clip(np.linalg.eigvalsh(S @ (B1 + B2) @ S), 0, None))
    xi = np.sort(xi)
    ground = 0.5 * (float(np.sum(xi)) - float(np.trace(B1).real)) + blocks.constant
    return BogoliubovSpectrum(xi, float(ground))


# -- operator bounds ----------------------------------------------------------------------


def sandwich_bounds_check(blocks: QuadraticBlocks, spectrum: BogoliubovSpectrum | None, C: float,
                          h=None, max_quanta: int = 10, tol: float = 1e-9) -> bool:
    """Check (1/C)(dΓ(h)+N) - C <= H <= dΓ(h) + C N + C on a Fock truncation.

    ``h`` defaults to the one-body part stored with the blocks, else B1 - B2
    (equal to it for real modes).
    """
    if C <= 0:
        return False
    if h is None:
        h = blocks.h if blocks.h is not None else blocks.B1 - blocks.B2
    space = TruncatedFock(blocks.size, max_quanta)
    H = quadratic_operator(blocks.B1, blocks.B2, blocks.constant, space).toarray()
    dG = space.one_body(h).toarray()
    Nop = space.number.toarray()
    eye = np.eye(space.dim)
    lower = H - ((dG + Nop) / C - C * eye)
    upper = dG + C * Nop + C * eye - H
    return bool(np.linalg.eigvalsh(lower)[0] >= -tol and np.linalg.eigvalsh(upper)[0] >= -tol)


def find_sandwich_constant(blocks: QuadraticBlocks, max_quanta: int = 10, start: float = 1.0,
                           limit: float = 1e6) -> float:
    """Smallest C = start * 2^k for which sandwich_bounds_check passes."""
    C = start
    while C <= limit:
        if sandwich_bounds_check(blocks, None, C, max_quanta=max_quanta):
            return C
        C *= 2.0
    raise BogoliubovError(f"no sandwich constant below {limit}")


# -- bridge to exact diagonalization ----------------------------------------------------------


def toy_model_from_basis(basis: ModeBasis, spec: ModelSpec, N1: int, N2: int,
                         tensor: InteractionTensor | None = None):
    """Project the continuum model onto the mode basis for exact diagonalization."""
    from .fock import ToyModel

    tensor = tensor if tensor is not None else interaction_tensor(basis, spec)
    T1, T2 = _one_body(basis, spec)
    return ToyModel(T1, T2, tensor.V1, tensor.V2, tensor.V12, N1, N2)


# -- estimator -------------------------------------------------------------------------------


class BogoliubovModel(BaseEstimator):
    """Mode basis, quadratic blocks and spectrum for a minimized model.

    ``fit(spec, minimizer)`` also diagonalizes the half-size truncation
    (M/2) and flags ``converged_`` when the two ground energies agree within
    ``convergence_tol``.
    """

    def __init__(self, M1=4, M2=4, convergence_tol=1e-3):
        self.M1 = M1
        self.M2 = M2
        self.convergence_tol = convergence_tol

    def fit(self, spec: ModelSpec, minimizer: OrbitalPair):
        M1 = check_int(self.M1, "M1", 1)
        M2 = check_int(self.M2, "M2", 1)
        tol = check_positive(self.convergence_tol, "convergence_tol")
        basis = build_mode_basis(minimizer, spec, M1, M2)
        tensor = interaction_tensor(basis, spec)
        blocks = assemble_bogoliubov(minimizer, spec, basis, tensor)
        spectrum = diagonalize_quadratic(blocks)
        h1, h2 = max(1, M1 // 2), max(1, M2 // 2)
        half_basis = basis.truncated(h1, h2)
        half_tensor = InteractionTensor(tensor.V1[: h1 + 1, : h1 + 1, : h1 + 1, : h1 + 1],
                                        tensor.V2[: h2 + 1, : h2 + 1, : h2 + 1, : h2 + 1],
                                        tensor.V12[: h1 + 1, : h2 + 1, : h1 + 1, : h2 + 1])
        half = diagonalize_quadratic(assemble_bogoliubov(minimizer, spec, half_basis, half_tensor))
        self.basis_ = basis
        self.tensor_ = tensor
        self.blocks_ = blocks
        self.spectrum_ = spectrum
        self.xi_ = spectrum.xi
        self.ground_energy_ = spectrum.ground_energy
        self.half_ground_energy_ = half.ground_energy
        self.hessian_bottom_ = hessian_bottom(blocks)
        self.converged_ = abs(spectrum.ground_energy - half.ground_energy) <= tol
        return self

    def summary(self) -> dict:
        check_is_fitted(self, "spectrum_")
        return {
            "M1": self.M1,
            "M2": self.M2,
            "xi": self.xi_.tolist(),
            "ground_energy": self.ground_energy_,
            "ground_energy_half": self.half_ground_energy_,
            "mode_converged": bool(self.converged_),
            "hessian_bottom": self.hessian_bottom_,
            "pairing_strength": self.blocks_.pairing_strength(),
        }
