"""Quadratic bosonic Hamiltonians on a Fock space truncated by total quanta.

Used as an independent oracle for the symplectic diagonalization: the
matrix of

    H = Σ B1_ij a*_i a_j + ½ Σ (B2_ij a*_i a*_j + conj(B2_ij) a_i a_j) + const

is assembled on all occupation vectors with Σ n_i <= Q and diagonalized
directly.  Terms leaving the truncated space are dropped (compression).
"""

from __future__ import annotations

import itertools
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["TruncatedFock", "quadratic_operator", "truncated_spectrum"]


class TruncatedFock:
    """Occupation vectors of ``modes`` bosonic modes with total at most ``max_quanta``."""

    def __init__(self, modes: int, max_quanta: int, cap: int = 200_000):
        if modes < 1 or max_quanta < 0:
            raise ValueError("need modes >= 1 and max_quanta >= 0")
        dim = comb(max_quanta + modes, modes)
        if dim > cap:
            raise ValueError(f"truncated Fock dimension {dim} exceeds cap {cap}")
        self.modes = modes
        self.max_quanta = max_quanta
        states = [s for total in range(max_quanta + 1) for s in _compositions(total, modes)]
        self.states = np.array(states, dtype=np.int64).reshape(-1, modes)
        self._base = max_quanta + 3
        keys = self._keys(self.states)
        self._order = np.argsort(keys)
        self._sorted_keys = keys[self._order]

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def _keys(self, states):
        weights = self._base ** np.arange(self.modes, dtype=np.int64)
        return states @ weights

    def index(self, states) -> np.ndarray:
        """Row indices of ``states`` (-1 where outside the truncation)."""
        states = np.atleast_2d(states)
        ok = (states.min(axis=1) >= 0) & (states.sum(axis=1) <= self.max_quanta)
        keys = self._keys(np.clip(states, 0, self._base - 1))
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.clip(pos, 0, self.dim - 1)
        found = ok & (self._sorted_keys[pos] == keys)
        return np.where(found, self._order[pos], -1)

    @cached_property
    def number(self) -> sp.csr_matrix:
        return sp.diags(self.states.sum(axis=1).astype(float)).tocsr()

    def hop(self, i: int, j: int) -> sp.csr_matrix:
        """a*_i a_j."""
        S = self.states
        if i == j:
            return sp.diags(S[:, i].astype(float)).tocsr()
        src = np.nonzero(S[:, j] > 0)[0]
        new = S[src].copy()
        new[:, j] -= 1
        new[:, i] += 1
        amp = np.sqrt(S[src, j] * (S[src, i] + 1.0))
        dst = self.index(new)
        keep = dst >= 0
        return sp.csr_matrix((amp[keep], (dst[keep], src[keep])), shape=(self.dim, self.dim))

    def create_pair(self, i: int, j: int) -> sp.csr_matrix:
        """a*_i a*_j."""
        S = self.states
        new = S.copy()
        new[:, i] += 1
        new[:, j] += 1
        if i == j:
            amp = np.sqrt((S[:, i] + 1.0) * (S[:, i] + 2.0))
        else:
            amp = np.sqrt((S[:, i] + 1.0) * (S[:, j] + 1.0))
        dst = self.index(new)
        keep = dst >= 0
        src = np.arange(self.dim)
        return sp.csr_matrix((amp[keep], (dst[keep], src[keep])), shape=(self.dim, self.dim))

    def one_body(self, h) -> sp.csr_matrix:
        """dΓ(h) = Σ h_ij a*_i a_j."""
        h = np.asarray(h)
        out = sp.csr_matrix((self.dim, self.dim), dtype=np.result_type(h, float))
        for i in range(self.modes):
            for j in range(self.modes):
                if h[i, j] != 0:
                    out = out + h[i, j] * self.hop(i, j)
        return out.tocsr()


def _compositions(total: int, parts: int):
    """Occupation tuples summing to ``total``, in lexicographic order."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        occ = []
        for b in bars:
            occ.append(b - prev - 1)
            prev = b
        occ.append(total + parts - 2 - prev)
        yield tuple(occ)


def quadratic_operator(B1, B2, constant: float, space: TruncatedFock) -> sp.csr_matrix:
    B1 = np.asarray(B1)
    B2 = np.asarray(B2)
    M = space.modes
    if B1.shape != (M, M) or B2.shape != (M, M):
        raise ValueError("block shapes do not match the number of modes")
    H = space.one_body(B1)
    pair = sp.csr_matrix((space.dim, space.dim), dtype=np.result_type(B2, float))
    for i in range(M):
        for j in range(M):
            if B2[i, j] != 0:
                pair = pair + 0.5 * B2[i, j] * space.create_pair(i, j)
    H = H + pair + pair.conj().T + constant * sp.identity(space.dim, format="csr")
    return H.tocsr()


def truncated_spectrum(B1, B2, constant: float, max_quanta: int, levels: int = 4) -> np.ndarray:
    """Lowest ``levels`` eigenvalues of the compressed quadratic Hamiltonian."""
    space = TruncatedFock(np.asarray(B1).shape[0], max_quanta)
    H = quadratic_operator(B1, B2, constant, space)
    if space.dim <= 1500:
        vals = np.linalg.eigvalsh(H.toarray())
        return vals[:levels]
    v0 = np.random.default_rng(0).standard_normal(space.dim)
    vals = spla.eigsh(H, k=levels, which="SA", v0=v0, tol=1e-12)[0]
    return np.sort(vals)
