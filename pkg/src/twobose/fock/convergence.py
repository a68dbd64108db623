"""Exact-diagonalization sweep in N against the Hartree and Bogoliubov predictions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .basis import DimensionError
from .excitation import bogoliubov_operator, excitation_map
from .hamiltonian import build_hamiltonian, condensation_fraction, ground_state
from .toy import ToyModel, condensate_frame, toy_hartree

__all__ = ["ConvergenceTable", "bogoliubov_convergence_study", "hartree_frame"]

COLUMNS = ("N", "N1", "N2", "dim", "E_N", "leading_error", "second_order_error", "overlap",
           "depletion_1", "depletion_2", "note")


@dataclass
class ConvergenceTable:
    rows: list
    e_H: float
    bogoliubov_ground: float
    xi: list
    hartree_residual: float
    notes: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows if r["note"] == ""], dtype=float)

    def decreasing(self, name: str) -> bool:
        vals = np.abs(self.column(name))
        return bool(np.all(np.diff(vals) < 0))

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if meta:
                for k in sorted(meta):
                    fh.write(f"# {k}: {meta[k]}\n")
            w = csv.DictWriter(fh, fieldnames=list(COLUMNS), lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def to_dict(self) -> dict:
        return {"rows": self.rows, "e_H": self.e_H, "bogoliubov_ground": self.bogoliubov_ground,
                "xi": self.xi, "hartree_residual": self.hartree_residual, "notes": self.notes}


def hartree_frame(model: ToyModel, tol: float = 1e-11):
    """Toy Hartree minimizer and the model rotated so that it sits in mode 0."""
    h = toy_hartree(model, tol=tol)
    W1, W2 = condensate_frame(h.u0), condensate_frame(h.v0)
    return h, model.rotated(W1, W2)


def _bogoliubov_ground_vector(model: ToyModel) -> np.ndarray:
    H = bogoliubov_operator(model)
    if H.shape[0] <= 2000:
        vals, vecs = np.linalg.eigh(H.toarray())
        return vecs[:, 0]
    v0 = np.random.default_rng(0).standard_normal(H.shape[0])
    return spla.eigsh(H, k=1, which="SA", v0=v0, tol=1e-13)[1][:, 0]


def bogoliubov_convergence_study(model: ToyModel, Ns, c1: float | None = None,
                                 cap: int = 200_000, seed: int = 0) -> ConvergenceTable:
    """Rows per N: E_N, E_N/N - e_H, E_N - N e_H - inf σ(ℍ), overlap with the
    truncated Bogoliubov ground state, and the depletions 1 - λ_max(γ).

    ``c1`` defaults to the model's own ratio; every N must split into integer
    N1 = c1 N, N2 = N - N1.
    """
    from ..bogoliubov import InteractionTensor, blocks_from_tensors, diagonalize_quadratic

    c1 = model.ratios[0] if c1 is None else c1
    Ns = [int(n) for n in Ns]
    splits = []
    for N in Ns:
        N1 = round(c1 * N)
        if abs(N1 - c1 * N) > 1e-9:
            raise ValueError(f"c1 = {c1} does not split N = {N} into integers")
        splits.append((N, N1, N - N1))
    ref = model.with_particles(splits[0][1], splits[0][2])
    h, framed = hartree_frame(ref)
    cc1, cc2 = framed.ratios
    blocks = blocks_from_tensors(framed.T1, framed.T2, InteractionTensor(framed.V1, framed.V2, framed.V12), cc1, cc2)
    spectrum = diagonalize_quadratic(blocks)
    inf_H = spectrum.ground_energy
    rows, notes = [], []
    for N, N1, N2 in splits:
        m = framed.with_particles(N1, N2)
        row = dict.fromkeys(COLUMNS, float("nan"))
        row.update(N=N, N1=N1, N2=N2, note="")
        try:
            H = build_hamiltonian(m, cap=cap)
        except DimensionError as exc:
            row.update(dim=-1, note=f"skipped: {exc}")
            rows.append(row)
            notes.append(row["note"])
            continue
        E, psi = ground_state(H, seed=seed)
        chi = excitation_map(psi)
        phi = _bogoliubov_ground_vector(m)
        frac = condensation_fraction(psi)
        row.update(dim=H.basis.dim, E_N=E, leading_error=E / N - h.energy,
                   second_order_error=E - N * h.energy - inf_H,
                   overlap=float(abs(np.vdot(phi, chi.coefficients)) ** 2),
                   depletion_1=1.0 - frac.lambda1, depletion_2=1.0 - frac.lambda2)
        rows.append(row)
    return ConvergenceTable(rows, h.energy, inf_H, spectrum.xi.tolist(), h.residual, notes)
