"""Excitation map U_N, its operator relations and the splitting of U_N H U_N*.

Mode 0 of each species is the condensate.  The excitation space keeps the
occupations of modes 1..d-1 with j <= N1 species-1 and k <= N2 species-2
excitations; per species the states are ordered by total, then
lexicographically, and the product index is i1 * dim2 + i2.

Creation operators on the excitation space are compressions (states with
j = N1 are not raised further).  Every term built below carries a factor
that vanishes on those states, so the compression is exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis, ManyBodyVector, species_sector
from .hamiltonian import build_hamiltonian
from .quadratic import _compositions
from .toy import ToyModel, _residual, hartree_energy, mean_field_matrices

__all__ = ["ExcitationSpace", "ExcitationBasis", "ExcitationVector", "excitation_map", "excitation_adjoint",
           "excitation_unitary", "verify_relations", "RelationsReport", "split_M", "SplitReport",
           "bogoliubov_operator"]


class ExcitationSpace:
    """One species: occupations of d - 1 excited modes with total <= N."""

    def __init__(self, d: int, N: int):
        self.d, self.N = d, N
        states = [s for j in range(N + 1) for s in (_compositions(j, d - 1) if d > 1 else ([()] if j == 0 else []))]
        self.states = np.array(states, dtype=np.int64).reshape(-1, d - 1)
        self.totals = self.states.sum(axis=1)
        self._lookup = {tuple(s): i for i, s in enumerate(self.states.tolist())}

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def index(self, occ) -> int:
        return self._lookup.get(tuple(int(x) for x in occ), -1)

    @cached_property
    def number(self) -> np.ndarray:
        return self.totals.astype(float)

    @lru_cache(maxsize=None)
    def annihilate(self, m: int) -> sp.csr_matrix:
        """a_m for excited mode m >= 1."""
        k = m - 1
        rows, cols, vals = [], [], []
        for i, s in enumerate(self.states):
            if s[k] > 0:
                t = s.copy()
                t[k] -= 1
                rows.append(self.index(t))
                cols.append(i)
                vals.append(math.sqrt(s[k]))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))


@lru_cache(maxsize=64)
def _space(d: int, N: int) -> ExcitationSpace:
    return ExcitationSpace(d, N)


class ExcitationBasis:
    def __init__(self, d1: int, d2: int, N1: int, N2: int):
        self.d1, self.d2, self.N1, self.N2 = d1, d2, N1, N2
        self.e1 = _space(d1, N1)
        self.e2 = _space(d2, N2)

    @property
    def dim(self) -> int:
        return self.e1.dim * self.e2.dim

    @property
    def N(self) -> int:
        return self.N1 + self.N2

    def lift1(self, A):
        return sp.kron(A, sp.identity(self.e2.dim), format="csr")

    def lift2(self, B):
        return sp.kron(sp.identity(self.e1.dim), B, format="csr")

    @cached_property
    def numbers(self) -> tuple[np.ndarray, np.ndarray]:
        n1 = np.repeat(self.e1.number, self.e2.dim)
        n2 = np.tile(self.e2.number, self.e1.dim)
        return n1, n2

    def block_mask(self, j: int, k: int) -> np.ndarray:
        n1, n2 = self.numbers
        return (n1 == j) & (n2 == k)

    # operators on the product space
    def a(self, m):
        return self.lift1(self.e1.annihilate(m))

    def b(self, m):
        return self.lift2(self.e2.annihilate(m))

    def diag(self, values):
        return sp.diags(np.asarray(values, dtype=float)).tocsr()


@dataclass
class ExcitationVector:
    basis: ExcitationBasis
    coefficients: np.ndarray

    def block(self, j: int, k: int) -> np.ndarray:
        return self.coefficients[self.basis.block_mask(j, k)]

    def block_norms(self) -> np.ndarray:
        b = self.basis
        out = np.zeros((b.N1 + 1, b.N2 + 1))
        n1, n2 = b.numbers
        np.add.at(out, (n1.astype(int), n2.astype(int)), np.abs(self.coefficients) ** 2)
        return out

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


def _power_chain(d: int, N: int, j: int, creation: bool) -> sp.csr_matrix:
    """a_0^(N-j) / sqrt((N-j)!) from sector N to sector j, or its creation counterpart."""
    out = sp.identity(species_sector(d, N).dim if not creation else species_sector(d, j).dim, format="csr")
    if creation:
        for step in range(j, N):
            src, dst = species_sector(d, step), species_sector(d, step + 1)
            S = src.states
            new = S.copy()
            new[:, 0] += 1
            op = sp.csr_matrix((np.sqrt(S[:, 0] + 1.0), (dst.index(new), np.arange(src.dim))),
                               shape=(dst.dim, src.dim))
            out = op @ out
    else:
        for step in range(N, j, -1):
            out = species_sector(d, step).annihilate(0, species_sector(d, step - 1)) @ out
    return (out / math.sqrt(math.factorial(N - j))).tocsr()


def _species_unitary(d: int, N: int, adjoint: bool = False) -> sp.csr_matrix:
    """Q^{⊗j} a_0^(N-j)/sqrt((N-j)!) summed over j, species by species."""
    E = _space(d, N)
    rows, cols, vals = [], [], []
    full = species_sector(d, N)
    for j in range(N + 1):
        sec = species_sector(d, j)
        # Q^{⊗j} keeps states with no condensate particle; embed into the excitation index
        keep = np.nonzero(sec.states[:, 0] == 0)[0]
        emb = np.array([E.index(sec.states[i, 1:]) for i in keep], dtype=np.int64)
        P = sp.csr_matrix((np.ones(keep.size), (emb, keep)), shape=(E.dim, sec.dim))
        if adjoint:
            block = (_power_chain(d, N, j, creation=True) @ P.T).tocoo()
        else:
            block = (P @ _power_chain(d, N, j, creation=False)).tocoo()
        rows.append(block.row)
        cols.append(block.col)
        vals.append(block.data)
    shape = (full.dim, E.dim) if adjoint else (E.dim, full.dim)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)


@lru_cache(maxsize=32)
def excitation_unitary(d1: int, d2: int, N1: int, N2: int, adjoint: bool = False) -> sp.csr_matrix:
    """Matrix of U_N (or of U_N* assembled from its own formula) between sector and excitation space."""
    return sp.kron(_species_unitary(d1, N1, adjoint), _species_unitary(d2, N2, adjoint), format="csr")


def excitation_map(psi: ManyBodyVector) -> ExcitationVector:
    """χ = U_N ψ; the block (j, k) holds χ_jk."""
    b = psi.basis
    U = excitation_unitary(b.d1, b.d2, b.N1, b.N2)
    return ExcitationVector(ExcitationBasis(b.d1, b.d2, b.N1, b.N2), U @ psi.coefficients)


def excitation_adjoint(chi: ExcitationVector) -> ManyBodyVector:
    """ψ = Σ_jk (a0*)^(N1-j) (b0*)^(N2-k) χ_jk / sqrt((N1-j)!(N2-k)!)."""
    e = chi.basis
    Uadj = excitation_unitary(e.d1, e.d2, e.N1, e.N2, adjoint=True)
    return ManyBodyVector(FockBasis(e.d1, e.d2, e.N1, e.N2), Uadj @ chi.coefficients)


def _maxabs(A) -> float:
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    return float(abs(A).max()) if A.nnz else 0.0


# -- relations ---------------------------------------------------------------------------------


@dataclass
class RelationsReport:
    deviations: dict
    unitarity: float
    adjoint_consistency: float
    trace_check: float

    @property
    def max_deviation(self) -> float:
        return max(max(self.deviations.values()), self.unitarity, self.adjoint_consistency, self.trace_check)

    def to_dict(self) -> dict:
        return {"deviations": self.deviations, "unitarity": self.unitarity,
                "adjoint_consistency": self.adjoint_consistency, "trace_check": self.trace_check,
                "max_deviation": self.max_deviation}


def verify_relations(d1: int, d2: int, N1: int, N2: int) -> RelationsReport:
    """Both sides of the eight conjugation identities as explicit matrices."""
    fb = FockBasis(d1, d2, N1, N2, cap=10_000)
    eb = ExcitationBasis(d1, d2, N1, N2)
    U = excitation_unitary(d1, d2, N1, N2)
    Uadj = excitation_unitary(d1, d2, N1, N2, adjoint=True)
    eye = sp.identity(eb.dim, format="csr")
    unitarity = max(_maxabs(U @ U.conj().T - eye), _maxabs(U.conj().T @ U - eye))
    adjoint = _maxabs(Uadj - U.conj().T)

    conj = lambda A: U @ A @ U.conj().T  # noqa: E731
    dev = {}
    n1, n2 = eb.numbers
    for sp_idx, (d, N, nvec, lift, sector, op) in enumerate(
        ((d1, N1, n1, fb.lift1, fb.s1, eb.a), (d2, N2, n2, fb.lift2, fb.s2, eb.b)), start=1
    ):
        name = "a" if sp_idx == 1 else "b"
        X = eb.diag(N - nvec)
        s = eb.diag(np.sqrt(np.maximum(N - nvec, 0)))
        worst = {"00": _maxabs(conj(lift(sector.hop(0, 0))) - X), "0m": 0.0, "m0": 0.0, "mn": 0.0}
        for m in range(1, d):
            am = op(m)
            worst["0m"] = max(worst["0m"], _maxabs(conj(lift(sector.hop(0, m))) - s @ am))
            worst["m0"] = max(worst["m0"], _maxabs(conj(lift(sector.hop(m, 0))) - am.conj().T @ s))
            for n in range(1, d):
                worst["mn"] = max(worst["mn"], _maxabs(conj(lift(sector.hop(m, n))) - am.conj().T @ op(n)))
        for key, val in worst.items():
            dev[f"{name}*_{key[0]} {name}_{key[1]}"] = val
    lhs = conj(fb.lift1(fb.s1.hop(0, 0))).diagonal().sum()
    trace = abs(lhs - float(np.sum(N1 - n1)))
    return RelationsReport(dev, unitarity, adjoint, float(trace))


# -- splitting -----------------------------------------------------------------------------------


class _Ops:
    """Excitation-space building blocks for a model in its condensate frame."""

    def __init__(self, model: ToyModel):
        self.model = model
        eb = ExcitationBasis(model.d1, model.d2, model.N1, model.N2)
        self.eb = eb
        n1, n2 = eb.numbers
        N1, N2 = model.N1, model.N2
        self.n1, self.n2 = eb.diag(n1), eb.diag(n2)
        self.X1, self.X2 = eb.diag(N1 - n1), eb.diag(N2 - n2)
        self.s1 = eb.diag(np.sqrt(np.maximum(N1 - n1, 0)))
        self.s2 = eb.diag(np.sqrt(np.maximum(N2 - n2, 0)))
        self.s1m = eb.diag(np.sqrt(np.maximum(N1 - n1 - 1, 0)))
        self.s2m = eb.diag(np.sqrt(np.maximum(N2 - n2 - 1, 0)))
        self.a = {m: eb.a(m) for m in range(1, model.d1)}
        self.b = {m: eb.b(m) for m in range(1, model.d2)}
        self.ad = {m: A.conj().T.tocsr() for m, A in self.a.items()}
        self.bd = {m: B.conj().T.tocsr() for m, B in self.b.items()}
        self.one = sp.identity(eb.dim, format="csr")

    def zero(self):
        return sp.csr_matrix((self.eb.dim, self.eb.dim), dtype=complex)


def _hc(A):
    return A + A.conj().T


def _M0(o: _Ops, mu):
    m = o.model
    N, c1, c2 = m.N, *m.ratios
    V1, V2, V12 = m.V1[0, 0, 0, 0].real, m.V2[0, 0, 0, 0].real, m.V12[0, 0, 0, 0].real
    return (m.T1[0, 0].real * o.X1 + m.T2[0, 0].real * o.X2
            + V1 / (2 * N) * o.X1 @ (o.X1 - o.one) + V2 / (2 * N) * o.X2 @ (o.X2 - o.one)
            + V12 / N * o.X1 @ o.X2 + mu[0] * o.n1 + mu[1] * o.n2
            + (0.5 * c1 * V1 + 0.5 * c2 * V2) * o.one)


def _M1(o: _Ops):
    m = o.model
    N = m.N
    A = o.zero()
    for k, ad in o.ad.items():
        A = A + ad @ o.s1 @ (m.T1[k, 0] * o.one + m.V1[k, 0, 0, 0] / N * (o.X1 - o.one)
                             + m.V12[k, 0, 0, 0] / N * o.X2)
    for k, bd in o.bd.items():
        A = A + bd @ o.s2 @ (m.T2[k, 0] * o.one + m.V2[k, 0, 0, 0] / N * (o.X2 - o.one)
                             + m.V12[0, k, 0, 0] / N * o.X1)
    return _hc(A)


def _M1_cancelled(o: _Ops):
    """Form of M1 when mode 0 solves the toy Hartree equations."""
    m = o.model
    N = m.N
    A = o.zero()
    for k, ad in o.ad.items():
        A = A - ad @ o.s1 @ (m.V1[k, 0, 0, 0] * (o.n1 + o.one) + m.V12[k, 0, 0, 0] * o.n2) / N
    for k, bd in o.bd.items():
        A = A - bd @ o.s2 @ (m.V2[k, 0, 0, 0] * (o.n2 + o.one) + m.V12[0, k, 0, 0] * o.n1) / N
    return _hc(A)


def _M2_parts(o: _Ops, mu):
    """M2 split as (N-independent part that equals ℍ, remainder)."""
    m = o.model
    N = m.N
    c1, c2 = m.ratios
    r = math.sqrt(c1 * c2)
    N1, N2 = m.N1, m.N2
    V1, V2, V12 = m.V1, m.V2, m.V12
    hop, hopR = o.zero(), o.zero()
    pair, pairR = o.zero(), o.zero()
    pp1 = o.s1m @ o.s1
    pp2 = o.s2m @ o.s2
    ss = o.s1 @ o.s2
    for i, adi in o.ad.items():
        for j, aj in o.a.items():
            E = adi @ aj
            w = V1[i, 0, j, 0] + V1[i, 0, 0, j]
            hop = hop + (m.T1[i, j] + c1 * w + c2 * V12[i, 0, j, 0]) * E
            hopR = hopR - (w * E @ o.n1 + V12[i, 0, j, 0] * E @ o.n2) / N
            pair = pair + 0.5 * c1 * V1[i, j, 0, 0] * adi @ o.ad[j]
            pairR = pairR + 0.5 * V1[i, j, 0, 0] * adi @ o.ad[j] @ (pp1 - N1 * o.one) / N
        for j, bj in o.b.items():
            pair = pair + r * V12[i, j, 0, 0] * adi @ o.bd[j]
            pairR = pairR + V12[i, j, 0, 0] * adi @ o.bd[j] @ (ss - math.sqrt(N1 * N2) * o.one) / N
            # a*_i b_j and its conjugate b*_j a_i are both hermitian partners in hop
            cross = V12[i, 0, 0, j] * adi @ bj
            hop = hop + r * _hc(cross)
            hopR = hopR + _hc(V12[i, 0, 0, j] * adi @ (ss - math.sqrt(N1 * N2) * o.one) @ bj) / N
    for i, bdi in o.bd.items():
        for j, bj in o.b.items():
            E = bdi @ bj
            w = V2[i, 0, j, 0] + V2[i, 0, 0, j]
            hop = hop + (m.T2[i, j] + c2 * w + c1 * V12[0, i, 0, j]) * E
            hopR = hopR - (w * E @ o.n2 + V12[0, i, 0, j] * E @ o.n1) / N
            pair = pair + 0.5 * c2 * V2[i, j, 0, 0] * bdi @ o.bd[j]
            pairR = pairR + 0.5 * V2[i, j, 0, 0] * bdi @ o.bd[j] @ (pp2 - N2 * o.one) / N
    const = -mu[0] * o.n1 - mu[1] * o.n2 - 0.5 * (c1 * V1[0, 0, 0, 0].real + c2 * V2[0, 0, 0, 0].real) * o.one
    return hop + _hc(pair) + const, hopR + _hc(pairR)


def _M3(o: _Ops):
    m = o.model
    N = m.N
    A = o.zero()
    for i, adi in o.ad.items():
        for j, adj in o.ad.items():
            for k, ak in o.a.items():
                if m.V1[i, j, k, 0]:
                    A = A + m.V1[i, j, k, 0] * adi @ adj @ ak @ o.s1
        for j, bdj in o.bd.items():
            for k, ak in o.a.items():
                if m.V12[i, j, k, 0]:
                    A = A + m.V12[i, j, k, 0] * adi @ ak @ bdj @ o.s2
            for k, bk in o.b.items():
                if m.V12[i, j, 0, k]:
                    A = A + m.V12[i, j, 0, k] * adi @ o.s1 @ bdj @ bk
    for i, bdi in o.bd.items():
        for j, bdj in o.bd.items():
            for k, bk in o.b.items():
                if m.V2[i, j, k, 0]:
                    A = A + m.V2[i, j, k, 0] * bdi @ bdj @ bk @ o.s2
    return _hc(A) / N


def _M4(o: _Ops):
    m = o.model
    N = m.N
    A = o.zero()
    for i, adi in o.ad.items():
        for j, adj in o.ad.items():
            for k, ak in o.a.items():
                for q, aq in o.a.items():
                    if m.V1[i, j, k, q]:
                        A = A + 0.5 * m.V1[i, j, k, q] * adi @ adj @ ak @ aq
            for k, bdk in o.bd.items():
                for q, bq in o.b.items():
                    if m.V12[i, k, j, q]:
                        A = A + m.V12[i, k, j, q] * adi @ o.a[j] @ bdk @ bq
    for i, bdi in o.bd.items():
        for j, bdj in o.bd.items():
            for k, bk in o.b.items():
                for q, bq in o.b.items():
                    if m.V2[i, j, k, q]:
                        A = A + 0.5 * m.V2[i, j, k, q] * bdi @ bdj @ bk @ bq
    return A / N


def bogoliubov_operator(model: ToyModel, mu=None) -> sp.csr_matrix:
    """ℍ compressed to the excitation space of ``model`` (condensate = mode 0).

    Built from the quadratic blocks of the bogoliubov module, so comparing it
    with the N-independent part of M2 cross-checks both conventions.
    """
    from ..bogoliubov import InteractionTensor, blocks_from_tensors

    c1, c2 = model.ratios
    blocks = blocks_from_tensors(model.T1, model.T2, InteractionTensor(model.V1, model.V2, model.V12),
                                 c1, c2, mu=mu)
    o = _Ops(model)
    c = [o.a[m] for m in sorted(o.a)] + [o.b[m] for m in sorted(o.b)]
    cd = [x.conj().T.tocsr() for x in c]
    H = blocks.constant * o.one.astype(complex)
    pair = o.zero()
    for i in range(len(c)):
        for j in range(len(c)):
            if blocks.B1[i, j]:
                H = H + blocks.B1[i, j] * cd[i] @ c[j]
            if blocks.B2[i, j]:
                pair = pair + 0.5 * blocks.B2[i, j] * cd[i] @ cd[j]
    return (H + _hc(pair)).tocsr()


def _toy_multipliers(model: ToyModel):
    e0 = np.zeros(model.d1)
    f0 = np.zeros(model.d2)
    e0[0] = f0[0] = 1.0
    h1, h2 = mean_field_matrices(model, e0, f0)
    return float(h1[0, 0].real), float(h2[0, 0].real)


@dataclass
class SplitReport:
    M: list
    residual: float
    isolation_0: float
    cancellation: float | None
    isolation_2: float
    hartree_residual: float
    e_H: float
    mu: tuple
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "isolation_0": self.isolation_0, "cancellation": self.cancellation,
                "isolation_2": self.isolation_2, "hartree_residual": self.hartree_residual,
                "e_H": self.e_H, "mu": list(self.mu), "notes": list(self.notes)}


def split_M(model: ToyModel, stationary_tol: float = 1e-9) -> SplitReport:
    """M0..M4 on the excitation space and ‖U H U* - Σ M_j‖_max.

    Mode 0 of ``model`` is taken as the condensate.  The cancellation form of
    M1 is compared only when mode 0 solves the toy Hartree equations.
    """
    d1, d2, N1, N2 = model.d1, model.d2, model.N1, model.N2
    H = build_hamiltonian(model, cap=10_000).matrix
    U = excitation_unitary(d1, d2, N1, N2)
    lhs = U @ H @ U.conj().T
    o = _Ops(model)
    mu = _toy_multipliers(model)
    e0 = np.zeros(d1)
    f0 = np.zeros(d2)
    e0[0] = f0[0] = 1.0
    e_H = hartree_energy(model, e0, f0)
    M2_main, M2_rest = _M2_parts(o, mu)
    Ms = [_M0(o, mu), _M1(o), M2_main + M2_rest, _M3(o), _M4(o)]
    residual = _maxabs(lhs - sum(Ms[1:], Ms[0]))
    n1, n2 = o.n1, o.n2
    N = model.N
    poly = (N * e_H * o.one + model.V1[0, 0, 0, 0].real / (2 * N) * n1 @ (n1 + o.one)
            + model.V2[0, 0, 0, 0].real / (2 * N) * n2 @ (n2 + o.one)
            + model.V12[0, 0, 0, 0].real / N * n1 @ n2)
    iso0 = _maxabs(Ms[0] - poly)
    hres = _residual(model, e0.astype(complex), f0.astype(complex))
    notes = []
    if hres <= stationary_tol:
        cancel = _maxabs(Ms[1] - _M1_cancelled(o))
    else:
        cancel = None
        msg = f"mode 0 is not a toy Hartree stationary point (residual {hres:.2e}); M1 check skipped"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    iso2 = _maxabs(Ms[2] - bogoliubov_operator(model, mu) - M2_rest)
    return SplitReport([M.tocsr() for M in Ms], residual, iso0, cancel, iso2, hres, e_H, mu, notes)
