"""Occupation-number bases for the two-species (N1, N2) sector.

Each species sector lists occupation vectors (n_0, ..., n_{d-1}) with a fixed
total in ascending lexicographic order.  The two-species basis is the
product with species 1 major: index = i1 * dim2 + i2.  Serialized state
vectors rely on this order.
"""

from __future__ import annotations

from functools import cached_property, lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from .._binary import read_blob, write_blob
from .._validation import check_int
from .quadratic import _compositions

__all__ = ["SpeciesSector", "FockBasis", "SparseOperator", "ManyBodyVector",
           "DimensionError", "save_state", "load_state"]

_STATE_MAGIC = b"TBSTATE\0"


class DimensionError(ValueError):
    """A basis would exceed the configured dimension cap."""


def sector_dimension(d: int, N: int) -> int:
    return comb(N + d - 1, d - 1)


class SpeciesSector:
    """Occupations of ``d`` modes with exactly ``N`` particles."""

    def __init__(self, d: int, N: int):
        self.d = check_int(d, "d", 1)
        self.N = check_int(N, "N", 0)
        self.states = np.array(list(_compositions(N, d)), dtype=np.int64).reshape(-1, d)
        self._weights = (N + 1) ** np.arange(d - 1, -1, -1, dtype=np.int64)
        self._keys = self.states @ self._weights
        if np.any(np.diff(self._keys) <= 0):  # pragma: no cover - enumeration invariant
            raise AssertionError("sector enumeration is not strictly lexicographic")

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def index(self, states) -> np.ndarray:
        """Positions of ``states`` (-1 where not in the sector)."""
        states = np.atleast_2d(np.asarray(states, dtype=np.int64))
        ok = (states.min(axis=1) >= 0) & (states.sum(axis=1) == self.N)
        keys = np.clip(states, 0, self.N) @ self._weights
        pos = np.clip(np.searchsorted(self._keys, keys), 0, self.dim - 1)
        return np.where(ok & (self._keys[pos] == keys), pos, -1)

    @lru_cache(maxsize=None)
    def hop(self, m: int, p: int) -> sp.csr_matrix:
        """a*_m a_p inside the sector."""
        S = self.states
        if m == p:
            return sp.diags(S[:, m].astype(float)).tocsr()
        src = np.nonzero(S[:, p] > 0)[0]
        new = S[src].copy()
        new[:, p] -= 1
        new[:, m] += 1
        amp = np.sqrt(S[src, p] * (S[src, m] + 1.0))
        return sp.csr_matrix((amp, (self.index(new), src)), shape=(self.dim, self.dim))

    def annihilate(self, m: int, target: "SpeciesSector") -> sp.csr_matrix:
        """a_m as a map from this sector to ``target`` (N - 1 particles)."""
        if target.d != self.d or target.N != self.N - 1:
            raise ValueError("target sector must have one particle less")
        S = self.states
        src = np.nonzero(S[:, m] > 0)[0]
        new = S[src].copy()
        new[:, m] -= 1
        return sp.csr_matrix((np.sqrt(S[src, m].astype(float)), (target.index(new), src)),
                             shape=(target.dim, self.dim))


@lru_cache(maxsize=64)
def species_sector(d: int, N: int) -> SpeciesSector:
    return SpeciesSector(d, N)


class FockBasis:
    """Two-species basis with d1, d2 modes (mode 0 = condensate) and N1, N2 particles."""

    def __init__(self, d1: int, d2: int, N1: int, N2: int, cap: int = 200_000):
        dim = sector_dimension(d1, N1) * sector_dimension(d2, N2)
        if dim > cap:
            raise DimensionError(f"Fock sector dimension {dim} exceeds cap {cap}")
        self.d1, self.d2, self.N1, self.N2 = d1, d2, N1, N2
        self.s1 = species_sector(d1, N1)
        self.s2 = species_sector(d2, N2)

    @property
    def dim(self) -> int:
        return self.s1.dim * self.s2.dim

    @property
    def N(self) -> int:
        return self.N1 + self.N2

    def __eq__(self, other) -> bool:
        return isinstance(other, FockBasis) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def key(self) -> tuple:
        return (self.d1, self.d2, self.N1, self.N2)

    def index(self, n, m) -> int:
        i1 = int(self.s1.index(n)[0])
        i2 = int(self.s2.index(m)[0])
        if i1 < 0 or i2 < 0:
            raise KeyError(f"occupations {tuple(n)}, {tuple(m)} not in the sector")
        return i1 * self.s2.dim + i2

    def occupations(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        i1, i2 = divmod(int(i), self.s2.dim)
        return self.s1.states[i1], self.s2.states[i2]

    @cached_property
    def numbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupation arrays for every basis state, shapes (dim, d1) and (dim, d2)."""
        n = np.repeat(self.s1.states, self.s2.dim, axis=0)
        m = np.tile(self.s2.states, (self.s1.dim, 1))
        return n, m

    def lift1(self, A) -> sp.csr_matrix:
        return sp.kron(A, sp.identity(self.s2.dim), format="csr")

    def lift2(self, B) -> sp.csr_matrix:
        return sp.kron(sp.identity(self.s1.dim), B, format="csr")

    def condensate_index(self) -> int:
        n = np.zeros(self.d1, dtype=int)
        m = np.zeros(self.d2, dtype=int)
        n[0], m[0] = self.N1, self.N2
        return self.index(n, m)

    def header(self) -> dict:
        return {"d1": self.d1, "d2": self.d2, "N1": self.N1, "N2": self.N2, "dim": self.dim,
                "enumeration": "lexicographic ascending per species; index = i1 * dim2 + i2"}


class SparseOperator:
    """Sparse matrix bound to a basis; ``hermitian`` is verified on construction."""

    def __init__(self, basis: FockBasis, matrix, hermitian: bool = True, tol: float = 1e-12):
        matrix = sp.csr_matrix(matrix)
        if matrix.shape != (basis.dim, basis.dim):
            raise ValueError(f"matrix shape {matrix.shape} does not match basis dimension {basis.dim}")
        if hermitian:
            scale = max(1.0, float(abs(matrix).max())) if matrix.nnz else 1.0
            diff = matrix - matrix.conj().T
            err = float(abs(diff).max()) if diff.nnz else 0.0
            if err > tol * scale:
                raise ValueError(f"operator is not hermitian (deviation {err:.2e})")
        self.basis = basis
        self.matrix = matrix
        self.hermitian = hermitian

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, ManyBodyVector):
            return ManyBodyVector(self.basis, self.matrix @ other.coefficients)
        return self.matrix @ other

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def expectation(self, psi: "ManyBodyVector") -> float:
        c = psi.coefficients
        return float(np.vdot(c, self.matrix @ c).real / np.vdot(c, c).real)

    def entries(self) -> list[tuple[int, int, complex]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


class ManyBodyVector:
    def __init__(self, basis: FockBasis, coefficients):
        c = np.asarray(coefficients, dtype=complex).ravel()
        if c.size != basis.dim:
            raise ValueError(f"{c.size} coefficients for a basis of dimension {basis.dim}")
        self.basis = basis
        self.coefficients = c

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> "ManyBodyVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return ManyBodyVector(self.basis, self.coefficients / n)

    def inner(self, other: "ManyBodyVector") -> complex:
        if other.basis != self.basis:
            raise ValueError("vectors live on different bases")
        return complex(np.vdot(self.coefficients, other.coefficients))

    @classmethod
    def condensate(cls, basis: FockBasis) -> "ManyBodyVector":
        c = np.zeros(basis.dim, dtype=complex)
        c[basis.condensate_index()] = 1.0
        return cls(basis, c)

    @classmethod
    def random(cls, basis: FockBasis, seed) -> "ManyBodyVector":
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim)
        return cls(basis, c).normalized()


def save_state(psi: ManyBodyVector, path, meta: dict | None = None) -> None:
    header = {"format": "twobose-state", "version": 1, "basis": psi.basis.header(), "meta": meta or {}}
    write_blob(path, _STATE_MAGIC, header, {"coefficients": psi.coefficients})


def load_state(path) -> tuple[ManyBodyVector, dict]:
    header, arrays = read_blob(path, _STATE_MAGIC)
    b = header["basis"]
    basis = FockBasis(b["d1"], b["d2"], b["N1"], b["N2"])
    return ManyBodyVector(basis, arrays["coefficients"]), header
