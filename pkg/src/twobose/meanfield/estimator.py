"""Estimator-style front end for the mean-field minimizer."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .._validation import check_choice, check_int, check_is_fitted, check_positive, check_seed
from .minimize import MinimizeOptions, minimize
from .model import ModelSpec

__all__ = ["HartreeMinimizer", "write_report"]


class HartreeMinimizer(BaseEstimator):
    """Minimize the functional of a ModelSpec, optionally from several starts.

    ``n_starts > 1`` runs extra randomized starts seeded from ``seed`` and
    records ``start_spread_``, the largest sup-norm difference of (|u|, |v|)
    between the starts and the first one.  Fitted attributes end in ``_``.
    """

    def __init__(self, tol=1e-8, max_iter=100_000, method="cg", seed=None, n_starts=1, workers=None):
        self.tol = tol
        self.max_iter = max_iter
        self.method = method
        self.seed = seed
        self.n_starts = n_starts
        self.workers = workers

    def _options(self) -> MinimizeOptions:
        return MinimizeOptions(
            tol=check_positive(self.tol, "tol"),
            max_iter=check_int(self.max_iter, "max_iter", 1),
            method=check_choice(self.method, "method", ("cg", "flow")),
            workers=self.workers,
        )

    def fit(self, spec: ModelSpec, y=None):
        if not isinstance(spec, ModelSpec):
            raise TypeError("fit expects a ModelSpec")
        options = self._options()
        seed = check_seed(self.seed)
        n_starts = check_int(self.n_starts, "n_starts", 1)
        if n_starts == 1:
            seeds = [seed]
        else:
            ss = np.random.SeedSequence(seed)
            seeds = [int(c.generate_state(1)[0]) for c in ss.spawn(n_starts)]
        reports = [minimize(spec, seed=s, options=options) for s in seeds]
        best = min(reports, key=lambda r: r.energy)
        ref = reports[0].orbitals
        spread = 0.0
        for r in reports[1:]:
            for a, b in ((ref.u, r.orbitals.u), (ref.v, r.orbitals.v)):
                spread = max(spread, float(np.max(np.abs(np.abs(a.values) - np.abs(b.values)))))
        self.report_ = best
        self.reports_ = reports
        self.orbitals_ = best.orbitals
        self.energy_ = best.energy
        self.residual_ = best.residual
        self.multipliers_ = best.multipliers
        self.start_spread_ = spread
        self.spec_ = spec
        return self

    def score(self, spec=None, y=None) -> float:
        """Negative energy, so larger is better."""
        check_is_fitted(self, "report_")
        return -self.energy_


def write_report(report, out_dir: Path, stem: str = "minimize", meta: dict | None = None) -> dict:
    """Write the report as JSON plus a CSV energy trace; returns the JSON payload."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dict(meta or {})
    payload.update(report.to_dict())
    with open(out_dir / f"{stem}.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    with open(out_dir / f"{stem}_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "energy", "residual"])
        for i, (e, r) in enumerate(zip(report.energy_trace, report.residual_trace)):
            w.writerow([i, repr(float(e)), repr(float(r))])
    return payload
