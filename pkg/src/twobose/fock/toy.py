"""Finite-mode two-species models and their Hartree problem.

A ToyModel stores one-body matrices T1 (d1 x d1), T2 (d2 x d2) and interaction
tensors in the convention

    V[m, n, p, q] = <e_m (x) f_n, V  e_p (x) f_q>,

so species-1 indices of V12 sit in slots (m, p) and species-2 indices in
(n, q).  Hermiticity means conj(V[m,n,p,q]) = V[p,q,m,n]; same-species tensors
are also exchange symmetric, V[m,n,p,q] = V[n,m,q,p].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares
from scipy.optimize import minimize as sp_minimize

from .._validation import check_int, check_positive, check_seed

__all__ = ["ToyModel", "ToyModelError", "ToyHartree", "toy_hartree", "condensate_frame"]


class ToyModelError(ValueError):
    pass


def _as_matrix(x, name):
    if isinstance(x, dict):
        if set(x) - {"real", "imag"}:
            raise ToyModelError(f"{name}: complex arrays are given as {{'real': ..., 'imag': ...}}")
        arr = np.asarray(x["real"], dtype=float) + 1j * np.asarray(x.get("imag", 0.0), dtype=float)
    else:
        arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.number):
        raise ToyModelError(f"{name} must be numeric")
    if not np.all(np.isfinite(arr)):
        raise ToyModelError(f"{name} has non-finite entries")
    if np.iscomplexobj(arr) and np.all(arr.imag == 0):
        arr = arr.real
    return arr.astype(complex if np.iscomplexobj(arr) else float)


def _encode(arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        return {"real": arr.real.tolist(), "imag": arr.imag.tolist()}
    return arr.tolist()


class ToyModel:
    """Ingredients of the second-quantized Hamiltonian on d1 + d2 modes."""

    def __init__(self, T1, T2, V1, V2, V12, N1: int, N2: int, tol: float = 1e-10):
        self.T1 = _as_matrix(T1, "T1")
        self.T2 = _as_matrix(T2, "T2")
        self.V1 = _as_matrix(V1, "V1")
        self.V2 = _as_matrix(V2, "V2")
        self.V12 = _as_matrix(V12, "V12")
        self.N1 = check_int(N1, "N1", 0)
        self.N2 = check_int(N2, "N2", 0)
        if self.N1 + self.N2 < 1:
            raise ToyModelError("need at least one particle")
        d1, d2 = self.T1.shape[0], self.T2.shape[0]
        expect = {"T1": (d1, d1), "T2": (d2, d2), "V1": (d1,) * 4, "V2": (d2,) * 4, "V12": (d1, d2, d1, d2)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ToyModelError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        scale = max(1.0, *(float(np.max(np.abs(getattr(self, k)))) for k in expect))
        for name in ("T1", "T2"):
            M = getattr(self, name)
            if np.max(np.abs(M - M.conj().T)) > tol * scale:
                raise ToyModelError(f"{name} is not hermitian")
        for name in ("V1", "V2", "V12"):
            V = getattr(self, name)
            if np.max(np.abs(V.conj() - V.transpose(2, 3, 0, 1))) > tol * scale:
                raise ToyModelError(f"{name} violates conj(V[m,n,p,q]) = V[p,q,m,n]")
        for name in ("V1", "V2"):
            V = getattr(self, name)
            if np.max(np.abs(V - V.transpose(1, 0, 3, 2))) > tol * scale:
                raise ToyModelError(f"{name} violates V[m,n,p,q] = V[n,m,q,p]")

    @property
    def d1(self) -> int:
        return self.T1.shape[0]

    @property
    def d2(self) -> int:
        return self.T2.shape[0]

    @property
    def N(self) -> int:
        return self.N1 + self.N2

    @property
    def ratios(self) -> tuple[float, float]:
        return self.N1 / self.N, self.N2 / self.N

    def with_particles(self, N1: int, N2: int) -> "ToyModel":
        return ToyModel(self.T1, self.T2, self.V1, self.V2, self.V12, N1, N2)

    def interaction_is_zero(self) -> bool:
        return not (np.any(self.V1) or np.any(self.V2) or np.any(self.V12))

    def is_real(self) -> bool:
        return not any(np.iscomplexobj(getattr(self, k)) for k in ("T1", "T2", "V1", "V2", "V12"))

    def rotated(self, W1, W2) -> "ToyModel":
        """Same model in the mode bases given by the columns of unitaries W1, W2."""
        W1, W2 = np.asarray(W1), np.asarray(W2)
        for W, d in ((W1, self.d1), (W2, self.d2)):
            if W.shape != (d, d) or np.max(np.abs(W.conj().T @ W - np.eye(d))) > 1e-10:
                raise ToyModelError("rotation must be a unitary of the mode dimension")
        A, B = W1.conj(), W2.conj()
        T1 = A.T @ self.T1 @ W1
        T2 = B.T @ self.T2 @ W2
        V1 = np.einsum("am,bn,cp,dq,abcd->mnpq", A, A, W1, W1, self.V1, optimize=True)
        V2 = np.einsum("am,bn,cp,dq,abcd->mnpq", B, B, W2, W2, self.V2, optimize=True)
        V12 = np.einsum("am,bn,cp,dq,abcd->mnpq", A, B, W1, W2, self.V12, optimize=True)
        out = [T1, T2, V1, V2, V12]
        if self.is_real() and np.isrealobj(W1) and np.isrealobj(W2):
            out = [x.real for x in out]
        else:
            out[0] = 0.5 * (out[0] + out[0].conj().T)
            out[1] = 0.5 * (out[1] + out[1].conj().T)
        return ToyModel(*out, self.N1, self.N2)

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"T1": _encode(self.T1), "T2": _encode(self.T2), "V1": _encode(self.V1),
                "V2": _encode(self.V2), "V12": _encode(self.V12), "N1": self.N1, "N2": self.N2}

    @classmethod
    def from_dict(cls, cfg: dict) -> "ToyModel":
        cfg = dict(cfg)
        kind = cfg.pop("kind", "explicit")
        if kind == "random_miscible":
            allowed = {"d1", "d2", "N1", "N2", "coupling", "seed", "gap"}
            extra = set(cfg) - allowed
            if extra:
                raise ToyModelError(f"unknown toy model keys {sorted(extra)}")
            return cls.random_miscible(**cfg)
        if kind != "explicit":
            raise ToyModelError(f"unknown toy model kind {kind!r}")
        required = {"T1", "T2", "V1", "V2", "V12", "N1", "N2"}
        missing = required - set(cfg)
        if missing:
            raise ToyModelError(f"toy model is missing {sorted(missing)}")
        extra = set(cfg) - required
        if extra:
            raise ToyModelError(f"unknown toy model keys {sorted(extra)}")
        return cls(**cfg)

    @classmethod
    def from_json(cls, path) -> "ToyModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def random_miscible(cls, d1: int, d2: int, N1: int, N2: int, coupling: float = 0.5,
                        seed: int = 0, gap: float = 1.0) -> "ToyModel":
        """Real model whose interactions are sums of positive 'Fourier' components.

        V[m,n,p,q] = sum_k w(k) F_k[m,p] G_k[n,q] with symmetric F_k, G_k and weights
        satisfying w1 w2 >= w12², so every interaction quadratic form is
        positive (the finite analogue of miscibility).
        """
        d1 = check_int(d1, "d1", 1)
        d2 = check_int(d2, "d2", 1)
        check_positive(coupling, "coupling", allow_zero=True)
        rng = np.random.default_rng(check_seed(seed))

        def one_body(d):
            A = rng.standard_normal((d, d))
            return np.diag(gap * np.arange(d, dtype=float)) + 0.1 * gap * (A + A.T) / 2

        T1, T2 = one_body(d1), one_body(d2)
        K = 4
        w1 = rng.uniform(0.5, 1.5, K)
        w2 = rng.uniform(0.5, 1.5, K)
        w12 = rng.uniform(-0.8, 0.8, K) * np.sqrt(w1 * w2)

        def frames(d):
            F = rng.standard_normal((K, d, d)) / np.sqrt(d)
            F = 0.5 * (F + F.transpose(0, 2, 1))
            F[0] = np.eye(d)
            return F

        F, G = frames(d1), frames(d2)
        V1 = coupling * np.einsum("k,kmp,knq->mnpq", w1, F, F)
        V2 = coupling * np.einsum("k,kmp,knq->mnpq", w2, G, G)
        V12 = coupling * np.einsum("k,kmp,knq->mnpq", w12, F, G)
        return cls(T1, T2, V1, V2, V12, N1, N2)


# -- Hartree problem ------------------------------------------------------------------------


def hartree_energy(model: ToyModel, u, v) -> float:
    c1, c2 = model.ratios
    e = (c1 * np.vdot(u, model.T1 @ u) + c2 * np.vdot(v, model.T2 @ v)
         + 0.5 * c1 * c1 * np.einsum("m,n,p,q,mnpq->", u.conj(), u.conj(), u, u, model.V1)
         + 0.5 * c2 * c2 * np.einsum("m,n,p,q,mnpq->", v.conj(), v.conj(), v, v, model.V2)
         + c1 * c2 * np.einsum("m,n,p,q,mnpq->", u.conj(), v.conj(), u, v, model.V12))
    return float(e.real)


def mean_field_matrices(model: ToyModel, u, v):
    """h1, h2 (without the chemical potentials) at (u, v)."""
    c1, c2 = model.ratios
    h1 = model.T1 + c1 * np.einsum("mnpq,n,q->mp", model.V1, u.conj(), u) \
        + c2 * np.einsum("mnpq,n,q->mp", model.V12, v.conj(), v)
    h2 = model.T2 + c2 * np.einsum("mnpq,n,q->mp", model.V2, v.conj(), v) \
        + c1 * np.einsum("mnpq,m,p->nq", model.V12, u.conj(), u)
    return h1, h2


def _residual(model, u, v):
    h1, h2 = mean_field_matrices(model, u, v)
    r1 = h1 @ u - np.vdot(u, h1 @ u) * u
    r2 = h2 @ v - np.vdot(v, h2 @ v) * v
    return max(float(np.linalg.norm(r1)), float(np.linalg.norm(r2)))


def _phase_fix(u):
    j = int(np.argmax(np.abs(u)))
    return u * (abs(u[j]) / u[j])


@dataclass(frozen=True)
class ToyHartree:
    u0: np.ndarray
    v0: np.ndarray
    energy: float
    residual: float
    multipliers: tuple[float, float]


def _polish(model: ToyModel, u, v, cplx: bool):
    """Levenberg-Marquardt on h u = μ u, |u| = 1 (and the same for v), with the
    phase of the largest entry pinned."""
    d1, d2 = model.d1, model.d2
    j1, j2 = int(np.argmax(np.abs(u))), int(np.argmax(np.abs(v)))
    u = u * (abs(u[j1]) / u[j1])
    v = v * (abs(v[j2]) / v[j2])

    def split(x):
        if cplx:
            a, b = x[:2 * d1], x[2 * d1:2 * (d1 + d2)]
            return a[:d1] + 1j * a[d1:], b[:d2] + 1j * b[d2:], x[-2:]
        return x[:d1].astype(complex), x[d1:d1 + d2].astype(complex), x[-2:]

    def fun(x):
        uu, vv, mu = split(x)
        h1, h2 = mean_field_matrices(model, uu, vv)
        r1 = h1 @ uu - mu[0] * uu
        r2 = h2 @ vv - mu[1] * vv
        parts = [r1.real, r2.real, [np.vdot(uu, uu).real - 1, np.vdot(vv, vv).real - 1]]
        if cplx:
            parts += [r1.imag, r2.imag, [uu[j1].imag, vv[j2].imag]]
        return np.concatenate(parts)

    h1, h2 = mean_field_matrices(model, u, v)
    mu0 = [np.vdot(u, h1 @ u).real, np.vdot(v, h2 @ v).real]
    x0 = np.concatenate([u.real, u.imag, v.real, v.imag, mu0] if cplx else [u.real, v.real, mu0])
    sol = least_squares(fun, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    uu, vv, _ = split(sol.x)
    return uu / np.linalg.norm(uu), vv / np.linalg.norm(vv)


def toy_hartree(model: ToyModel, tol: float = 1e-11) -> ToyHartree:
    """Minimize the Hartree functional over unit vectors of C^d1 x C^d2.

    BFGS on the normalized parametrization finds the basin; a least-squares
    solve of the stationarity equations then polishes to ``tol``.  (Plain
    self-consistent iteration is not used: its fixed point can be repulsive.)
    """
    d1, d2 = model.d1, model.d2
    cplx = not model.is_real()
    u = np.linalg.eigh(model.T1)[1][:, 0].astype(complex)
    v = np.linalg.eigh(model.T2)[1][:, 0].astype(complex)

    def unpack(x):
        if cplx:
            a, b = x[: 2 * d1], x[2 * d1:]
            return a[:d1] + 1j * a[d1:], b[:d2] + 1j * b[d2:]
        return x[:d1].astype(complex), x[d1:].astype(complex)

    def fun(x):
        ru, rv = unpack(x)
        nu, nv = np.linalg.norm(ru), np.linalg.norm(rv)
        uh, vh = ru / nu, rv / nv
        h1, h2 = mean_field_matrices(model, uh, vh)
        c1, c2 = model.ratios
        grads = []
        for w, n, G in ((uh, nu, c1 * h1 @ uh), (vh, nv, c2 * h2 @ vh)):
            g = (G - np.vdot(w, G).real * w) / n
            grads.append(np.concatenate([2 * g.real, 2 * g.imag]) if cplx else 2 * g.real)
        return hartree_energy(model, uh, vh), np.concatenate(grads)

    pack = (lambda a, b: np.concatenate([a.real, a.imag, b.real, b.imag])) if cplx else \
        (lambda a, b: np.concatenate([a.real, b.real]))
    if not model.interaction_is_zero():
        res = sp_minimize(fun, pack(u, v), jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 5000})
        u, v = unpack(res.x)
        u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
        r0 = _residual(model, u, v)
        if r0 > tol:
            pu, pv = _polish(model, u, v, cplx)
            # keep the polished point only if it is better and still the same minimum
            if _residual(model, pu, pv) < r0 and hartree_energy(model, pu, pv) <= hartree_energy(model, u, v) + 1e-9:
                u, v = pu, pv
    r = _residual(model, u, v)
    if r > tol:
        warnings.warn(f"toy Hartree residual {r:.2e} above {tol:.0e}", RuntimeWarning, stacklevel=2)
    u, v = _phase_fix(u), _phase_fix(v)
    if not cplx:
        u, v = u.real, v.real
    h1, h2 = mean_field_matrices(model, u, v)
    mus = (float(np.vdot(u, h1 @ u).real), float(np.vdot(v, h2 @ v).real))
    return ToyHartree(u, v, hartree_energy(model, u, v), r, mus)


def condensate_frame(w) -> np.ndarray:
    """Unitary whose first column is the unit vector ``w``."""
    w = np.asarray(w)
    d = w.size
    n = np.linalg.norm(w)
    if abs(n - 1) > 1e-10:
        raise ToyModelError(f"condensate vector has norm {n}")
    # start from the coordinate vectors least aligned with w
    order = np.argsort(np.abs(w), kind="stable")
    M = np.column_stack([w, np.eye(d, dtype=w.dtype)[:, order[: d - 1]]])
    Q, R = np.linalg.qr(M)
    Q[:, 0] = Q[:, 0] * (R[0, 0] / abs(R[0, 0]))
    return Q
