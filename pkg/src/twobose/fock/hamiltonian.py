"""Many-body Hamiltonian on the (N1, N2) sector, ground states and reduced densities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import FockBasis, ManyBodyVector, SparseOperator, species_sector
from .toy import ToyModel

__all__ = ["build_hamiltonian", "ground_state", "reduced_density", "condensation_fraction",
           "CondensationFraction", "ConvergenceError", "SUPPORTED_DENSITIES"]

DENSE_LIMIT = 2000
SUPPORTED_DENSITIES = ((0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2))


class ConvergenceError(RuntimeError):
    pass


def _species_terms(sector, T, V, N_total: int):
    """dΓ(T) + (1/2N) Σ V_mnpq a*_m a*_n a_p a_q inside one species sector.

    Uses a*_m a*_n a_p a_q = E_mp E_nq - δ_np E_mq with E_mp = a*_m a_p.
    """
    d = T.shape[0]
    dtype = np.result_type(T, V, float)
    E = {(m, p): sector.hop(m, p) for m in range(d) for p in range(d)}
    T_eff = T - np.einsum("mnnq->mq", V) / (2 * N_total)
    out = sp.csr_matrix((sector.dim, sector.dim), dtype=dtype)
    for (m, p), Emp in E.items():
        if T_eff[m, p] != 0:
            out = out + T_eff[m, p] * Emp
        inner = sp.csr_matrix((sector.dim, sector.dim), dtype=dtype)
        for (n, q), Enq in E.items():
            if V[m, n, p, q] != 0:
                inner = inner + V[m, n, p, q] * Enq
        if inner.nnz:
            out = out + (Emp @ inner) / (2 * N_total)
    return out


def build_hamiltonian(model: ToyModel, cap: int = 200_000) -> SparseOperator:
    """Σ T a*a + Σ T' b*b + (1/N)[½Σ V1 a*a*aa + ½Σ V2 b*b*bb + Σ V12 a*b*ab]."""
    basis = FockBasis(model.d1, model.d2, model.N1, model.N2, cap=cap)
    N = model.N
    H = basis.lift1(_species_terms(basis.s1, model.T1, model.V1, N))
    H = H + basis.lift2(_species_terms(basis.s2, model.T2, model.V2, N))
    d1, d2 = model.d1, model.d2
    dtype = np.result_type(model.V12, float)
    for m in range(d1):
        for p in range(d1):
            inner = sp.csr_matrix((basis.s2.dim, basis.s2.dim), dtype=dtype)
            for n in range(d2):
                for q in range(d2):
                    if model.V12[m, n, p, q] != 0:
                        inner = inner + model.V12[m, n, p, q] * basis.s2.hop(n, q)
            if inner.nnz:
                H = H + sp.kron(basis.s1.hop(m, p), inner, format="csr") / N
    H = sp.csr_matrix(H)
    H.sum_duplicates()
    H.eliminate_zeros()
    # exact hermiticity: symmetrize away rounding from the sums above
    return SparseOperator(basis, 0.5 * (H + H.conj().T), hermitian=True, tol=1e-10)


def _fix_phase(c: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.round(np.abs(c), 10)))  # first maximal entry, stable under rounding
    return c * (abs(c[j]) / c[j])


def ground_state(H: SparseOperator, seed: int = 0, dense_limit: int = DENSE_LIMIT,
                 tol: float = 1e-8) -> tuple[float, ManyBodyVector]:
    """Lowest eigenpair.  Dense below ``dense_limit``, else Lanczos (ARPACK) with a seeded start."""
    if not H.hermitian:
        raise ValueError("ground_state needs a hermitian operator")
    A = H.matrix
    n = A.shape[0]
    if n <= dense_limit:
        vals, vecs = np.linalg.eigh(A.toarray())
        E, c = float(vals[0]), vecs[:, 0]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        if np.iscomplexobj(A.data):
            v0 = v0 + 1j * rng.standard_normal(n)
        try:
            vals, vecs = spla.eigsh(A, k=1, which="SA", v0=v0, tol=1e-13, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"Lanczos did not converge on dimension {n}") from exc
        E, c = float(vals[0]), vecs[:, 0]
    c = _fix_phase(c.astype(complex))
    c /= np.linalg.norm(c)
    res = float(np.linalg.norm(A @ c - E * c))
    if res > tol * max(1.0, abs(E)):
        raise ConvergenceError(f"ground state residual {res:.2e} exceeds {tol:.0e}")
    return E, ManyBodyVector(H.basis, c)


def _annihilated(psi: ManyBodyVector, species: int, times: int):
    """Matrix whose columns are a_{m_times}...a_{m_1} ψ for all mode tuples, in C order."""
    b = psi.basis
    d, N = (b.d1, b.N1) if species == 1 else (b.d2, b.N2)
    current = psi.coefficients.reshape(b.s1.dim, b.s2.dim)
    cols = [current]
    for step in range(times):
        src = species_sector(d, N - step)
        dst = species_sector(d, N - step - 1)
        ops = [src.annihilate(m, dst) for m in range(d)]
        if species == 1:
            cols = [op @ c for c in cols for op in ops]
        else:
            cols = [(op @ c.T).T for c in cols for op in ops]
    return np.stack([c.ravel() for c in cols], axis=1)


def reduced_density(psi: ManyBodyVector, k: int, l: int) -> np.ndarray:
    """γ^(k,ℓ) on the (k + ℓ)-fold mode tensor space, trace normalized.

    γ^(1,0)[m, n] = <ψ, a*_n a_m ψ> / N1; higher orders pair the C-ordered index
    tuples the same way, e.g. γ^(1,1)[(m,n),(p,q)] = <ψ, a*_p b*_q b_n a_m ψ> / (N1 N2).
    """
    if (k, l) not in SUPPORTED_DENSITIES:
        raise ValueError(f"reduced density ({k},{l}) not supported; use one of {SUPPORTED_DENSITIES}")
    b = psi.basis
    if k > b.N1 or l > b.N2:
        raise ValueError(f"need k <= N1 and l <= N2, got ({k},{l}) for ({b.N1},{b.N2})")
    c = psi.coefficients / psi.norm()
    if k == 0 and l == 0:
        return np.ones((1, 1))
    if k and l:
        a = _annihilated(ManyBodyVector(b, c), 1, 1)  # columns a_m ψ on sector (N1-1, N2)
        inner = FockBasis(b.d1, b.d2, b.N1 - 1, b.N2)
        cols = [_annihilated(ManyBodyVector(inner, a[:, m]), 2, 1) for m in range(b.d1)]
        Phi = np.concatenate(cols, axis=1)
        norm = b.N1 * b.N2
    else:
        species = 1 if k else 2
        Phi = _annihilated(ManyBodyVector(b, c), species, k + l)
        norm = np.prod([(b.N1 if k else b.N2) - i for i in range(k + l)])
    gamma = (Phi.conj().T @ Phi).T / norm
    return 0.5 * (gamma + gamma.conj().T)


@dataclass(frozen=True)
class CondensationFraction:
    lambda1: float
    lambda2: float
    overlap1: float | None = None
    overlap2: float | None = None

    def __iter__(self):
        return iter((self.lambda1, self.lambda2))


def condensation_fraction(psi: ManyBodyVector, modes=None) -> CondensationFraction:
    """Largest eigenvalues of γ^(1,0), γ^(0,1); with ``modes`` = (u0, v0) also <u0, γ u0>."""
    b = psi.basis
    lam, ovl = [], []
    for (k, l), idx in (((1, 0), 0), ((0, 1), 1)):
        if (b.N1, b.N2)[idx] == 0:
            lam.append(1.0)
            ovl.append(1.0)
            continue
        g = reduced_density(psi, k, l)
        lam.append(float(np.linalg.eigvalsh(g)[-1]))
        if modes is not None:
            w = np.asarray(modes[idx])
            ovl.append(float(np.vdot(w, g @ w).real))
    if modes is None:
        return CondensationFraction(lam[0], lam[1])
    return CondensationFraction(lam[0], lam[1], ovl[0], ovl[1])
