"""Finite-dimensional quantum de Finetti experiments.

The Husimi measure of a two-species state ψ on the (N1, N2) sector is

    dμ(u, v) = dim1 · dim2 · |<u^{⊗N1} ⊗ v^{⊗N2}, ψ>|² du dv

with du, dv the uniform (Haar) probability measures on the unit spheres of
C^{d1}, C^{d2} and dim_s = C(N_s + d_s - 1, d_s - 1).  The Schur formula
dim ∫ |u^{⊗N}><u^{⊗N}| du = 1 on the symmetric sector makes μ a
probability measure, and its k-th moments approximate the reduced density
matrices.  Everything here is plain Monte Carlo over Haar samples.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._binary import read_blob, write_blob
from ._validation import check_int, check_is_fitted, check_seed
from .fock.basis import FockBasis, ManyBodyVector, species_sector
from .fock.hamiltonian import SUPPORTED_DENSITIES, reduced_density

__all__ = ["HusimiEnsemble", "HusimiSampler", "husimi_sample", "schur_check", "definetti_error",
           "definetti_scaling", "DefinettiScaling", "haar_vectors", "coherent_amplitudes",
           "save_ensemble", "load_ensemble", "MIN_SAMPLES"]

MIN_SAMPLES = 100
CHUNK = 16_384
_MAGIC = b"TBHUSIMI"


def haar_vectors(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """Uniform unit vectors in C^d as normalized complex Gaussians, one per row."""
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def coherent_amplitudes(u: np.ndarray, N: int) -> np.ndarray:
    """Occupation-basis coefficients of u^{⊗N}: √(N!/∏n_k!) ∏ u_k^{n_k}.

    ``u`` has one vector per row; columns follow the sector's lexicographic order.
    """
    u = np.atleast_2d(u)
    states = species_sector(u.shape[1], N).states
    mult = np.exp(0.5 * (gammaln(N + 1) - gammaln(states + 1).sum(axis=1)))
    return mult * np.prod(u[:, None, :] ** states[None, :, :], axis=2)


def _chunk_seeds(seed: int, count: int, chunk: int):
    n = -(-count // chunk)
    sizes = [chunk] * (n - 1) + [count - chunk * (n - 1)]
    return list(zip(np.random.SeedSequence(seed).spawn(n), sizes))


def _map(fn, items, threads: int):
    # executor.map keeps input order, so the later reduction order is fixed
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


@dataclass
class HusimiEnsemble:
    u: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    seed: int
    d1: int
    d2: int
    N1: int
    N2: int
    chunk: int = CHUNK

    @property
    def count(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        """Monte Carlo estimate of μ(total); equals 1 up to sampling error."""
        return float(np.mean(self.weights))

    @property
    def standard_error(self) -> float:
        return float(np.std(self.weights, ddof=1) / np.sqrt(self.count))

    @property
    def effective_samples(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / np.dot(w, w)) if w.any() else 0.0

    def moment(self, k: int, l: int) -> np.ndarray:
        """Σ w |u^{⊗k} ⊗ v^{⊗l}><...| / Σ w, on the C-ordered mode tensor space."""
        total = np.zeros((self.d1**k * self.d2**l,) * 2, dtype=complex)
        for start in range(0, self.count, self.chunk):
            sl = slice(start, start + self.chunk)
            x = np.ones((self.weights[sl].size, 1), dtype=complex)
            for _ in range(k):
                x = (x[:, :, None] * self.u[sl][:, None, :]).reshape(x.shape[0], -1)
            for _ in range(l):
                x = (x[:, :, None] * self.v[sl][:, None, :]).reshape(x.shape[0], -1)
            total += (x * self.weights[sl][:, None]).T @ x.conj()
        return total / self.weights.sum()

    def header(self) -> dict:
        return {"format": "twobose-husimi", "version": 1, "seed": self.seed, "count": self.count,
                "chunk": self.chunk, "d1": self.d1, "d2": self.d2, "N1": self.N1, "N2": self.N2,
                "mass": self.mass, "standard_error": self.standard_error, "sampler": "complex-gaussian-haar"}


def husimi_sample(psi: ManyBodyVector, d1: int, d2: int, N1: int, N2: int, count: int, seed: int,
                  threads: int = 1, chunk: int = CHUNK) -> HusimiEnsemble:
    """Haar samples (u, v) weighted by the Husimi density of ψ.

    Chunks draw from independent sub-seeds of ``seed``, so the ensemble does not
    depend on ``threads``.
    """
    count = check_int(count, "count")
    if count < MIN_SAMPLES:
        raise ValueError(f"count must be at least {MIN_SAMPLES}, got {count}")
    seed = check_seed(seed)
    if seed is None:
        raise ValueError("a seed is required")
    b = psi.basis
    if (b.d1, b.d2, b.N1, b.N2) != (d1, d2, N1, N2):
        raise ValueError(f"state lives on {b.key}, not on {(d1, d2, N1, N2)}")
    Psi = (psi.coefficients / psi.norm()).reshape(b.s1.dim, b.s2.dim)
    scale = b.s1.dim * b.s2.dim

    def work(item):
        ss, n = item
        rng = np.random.default_rng(ss)
        u, v = haar_vectors(rng, n, d1), haar_vectors(rng, n, d2)
        ov = np.einsum("si,ij,sj->s", coherent_amplitudes(u, N1).conj(), Psi,
                       coherent_amplitudes(v, N2).conj())
        return u, v, scale * np.abs(ov) ** 2

    parts = _map(work, _chunk_seeds(seed, count, chunk), threads)
    u, v, w = (np.concatenate(p) for p in zip(*parts))
    return HusimiEnsemble(u, v, w, seed, d1, d2, N1, N2, chunk)


def schur_check(d: int, N: int, count: int, seed: int, threads: int = 1, return_estimate: bool = False):
    """Largest entrywise deviation of dim · E_u |u^{⊗N}><u^{⊗N}| from the identity."""
    d, N = check_int(d, "d", 1), check_int(N, "N", 0)
    dim = species_sector(d, N).dim
    if dim > 10_000:
        raise ValueError(f"symmetric sector dimension {dim} exceeds 10^4")
    count = check_int(count, "count", 1)

    def work(item):
        ss, n = item
        c = coherent_amplitudes(haar_vectors(np.random.default_rng(ss), n, d), N)
        return c.T @ c.conj()

    total = np.zeros((dim, dim), dtype=complex)
    for part in _map(work, _chunk_seeds(check_seed(seed) or 0, count, CHUNK), threads):
        total += part
    est = dim * total / count
    dev = float(np.max(np.abs(est - np.eye(dim))))
    return (dev, est) if return_estimate else dev


def definetti_error(psi: ManyBodyVector, k: int, l: int, ensemble: HusimiEnsemble) -> float:
    """Trace-norm distance between γ^(k,l)_ψ and the (k,l) moment of the ensemble."""
    if (k, l) not in SUPPORTED_DENSITIES:
        raise ValueError(f"reduced density ({k},{l}) not supported; use one of {SUPPORTED_DENSITIES}")
    b = psi.basis
    if (b.d1, b.d2, b.N1, b.N2) != (ensemble.d1, ensemble.d2, ensemble.N1, ensemble.N2):
        raise ValueError("ensemble and state live on different sectors")
    diff = reduced_density(psi, k, l) - ensemble.moment(k, l)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum())


@dataclass
class DefinettiScaling:
    rows: list
    slope: float

    def to_csv(self, path, meta: dict | None = None) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            for key in sorted(meta or {}):
                fh.write(f"# {key}: {meta[key]}\n")
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def to_dict(self) -> dict:
        return {"rows": self.rows, "slope": self.slope}


def definetti_scaling(Ns, d: int = 2, k: int = 1, l: int = 0, count: int = 200_000, seed: int = 0,
                      threads: int = 1) -> DefinettiScaling:
    """Error of the Husimi moment for pure condensates e_0^{⊗N} ⊗ e_0^{⊗N}.

    ``slope`` is the least-squares slope of log(error) against log(1/N); the
    finite-dimensional bound predicts 1.
    """
    rows = []
    for i, N in enumerate(Ns):
        psi = ManyBodyVector.condensate(FockBasis(d, d, N, N))
        ens = husimi_sample(psi, d, d, N, N, count, seed=seed + i, threads=threads)
        rows.append({"N": int(N), "error": definetti_error(psi, k, l, ens), "mass": ens.mass,
                     "standard_error": ens.standard_error, "effective_samples": ens.effective_samples})
    x = np.log(1.0 / np.array([r["N"] for r in rows], dtype=float))
    y = np.log([r["error"] for r in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else float("nan")
    return DefinettiScaling(rows, slope)


def save_ensemble(ens: HusimiEnsemble, path, meta: dict | None = None) -> None:
    header = ens.header()
    header["meta"] = meta or {}
    write_blob(path, _MAGIC, header, {"u": ens.u, "v": ens.v, "weights": ens.weights})


def load_ensemble(path) -> tuple[HusimiEnsemble, dict]:
    h, a = read_blob(path, _MAGIC)
    ens = HusimiEnsemble(a["u"], a["v"], a["weights"], h["seed"], h["d1"], h["d2"], h["N1"], h["N2"], h["chunk"])
    return ens, h


class HusimiSampler(BaseEstimator):
    """Estimator wrapper: ``fit(psi)`` draws the ensemble, ``error(k, l)`` scores it."""

    def __init__(self, n_samples=100_000, seed=0, threads=1):
        self.n_samples = n_samples
        self.seed = seed
        self.threads = threads

    def fit(self, psi: ManyBodyVector, y=None):
        b = psi.basis
        self.psi_ = psi
        self.ensemble_ = husimi_sample(psi, b.d1, b.d2, b.N1, b.N2, self.n_samples, self.seed, self.threads)
        self.mass_ = self.ensemble_.mass
        return self

    def moment(self, k: int, l: int) -> np.ndarray:
        check_is_fitted(self, "ensemble_")
        return self.ensemble_.moment(k, l)

    def error(self, k: int = 1, l: int = 0) -> float:
        check_is_fitted(self, "ensemble_")
        return definetti_error(self.psi_, k, l, self.ensemble_)
