"""Stationary density of the reduced biomass equation and the
expectation-based bifurcation diagram.

With reflecting ends the zero-flux density is
``p(u) ∝ exp(int_0^u 2 f(z) / (sigma^2 (z + delta)) dz) / (u + delta)``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import logsumexp

from .model import ModelParams, find_equilibria, reduce_1d
from .pde import write_header


@dataclass(frozen=True)
class Density1D:
    u: np.ndarray
    p: np.ndarray
    cdf: np.ndarray

    @property
    def mean(self) -> float:
        return float(trapezoid(self.u * self.p, self.u))

    def quantile(self, level: float) -> float:
        # cdf is non-decreasing; np.interp needs strictly increasing xp
        c, idx = np.unique(self.cdf, return_index=True)
        return float(np.interp(level, c, self.u[idx]))


def stationary_density_1d(reduced, sigma: Optional[float] = None, u_max: float = 0.13,
                          n: int = 4001, b1: Optional[float] = None,
                          drift=None, shift: float = 0.0) -> Density1D:
    """Normalized density on ``[0, u_max]``, evaluated in log space.

    ``drift`` overrides ``reduced.f`` (used for synthetic checks); ``shift``
    adds a constant to the log density before normalization.
    """
    p = reduced.params
    sigma = p.sigma_u if sigma is None else sigma
    delta = p.delta
    u = np.linspace(0.0, u_max, n)
    f = drift(u) if drift is not None else reduced.f(u, b1)
    integrand = 2.0 * f / (sigma**2 * (u + delta))
    logp = cumulative_trapezoid(integrand, u, initial=0.0) - np.log(u + delta) + shift
    if not np.all(np.isfinite(logp)):
        raise ValueError("non-finite log density")
    # normalize with the trapezoid rule in log space
    h = np.diff(u)
    logw = np.log(np.r_[h[0] / 2, 0.5 * (h[:-1] + h[1:]), h[-1] / 2])
    logp = logp - logsumexp(logp + logw)
    dens = np.exp(logp)
    cdf = cumulative_trapezoid(dens, u, initial=0.0)
    cdf /= cdf[-1]
    if dens[-1] > 1e-12 * dens.max():
        warnings.warn(f"density at u_max={u_max} not negligible; enlarge u_max",
                      RuntimeWarning)
    return Density1D(u, dens, cdf)


@dataclass(frozen=True)
class BifurcationCurve:
    b1: np.ndarray
    sigmas: tuple
    ubar: np.ndarray   # shape (n_sigma, n_b1)
    q10: np.ndarray
    q90: np.ndarray
    branches: list     # per b1: list of (u, stability)

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(["b1", "sigma", "ubar", "q10", "q90"])
            for k, s in enumerate(self.sigmas):
                for j, b in enumerate(self.b1):
                    w.writerow([repr(float(b)), s, repr(float(self.ubar[k, j])),
                                repr(float(self.q10[k, j])), repr(float(self.q90[k, j]))])

    def branches_to_csv(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(["b1", "u_E1", "u_E2", "u_E3", "stab_E1", "stab_E2", "stab_E3"])
            for b, br in zip(self.b1, self.branches):
                us = [repr(float(u)) for u, _ in br][:3]
                st = [s for _, s in br][:3]
                us += [""] * (3 - len(us))
                st += [""] * (3 - len(st))
                w.writerow([repr(float(b)), *us, *st])


def bifurcation_curve(params: ModelParams, b1_grid: Sequence[float], sigmas: Sequence[float],
                      u_max: float = 0.13, n: int = 4001,
                      search_box=((0.05, 0.0), (1.0, 1.0))) -> BifurcationCurve:
    b1_grid = np.asarray(b1_grid, dtype=float)
    reduced = reduce_1d(params)
    shape = (len(sigmas), b1_grid.size)
    ubar, q10, q90 = np.empty(shape), np.empty(shape), np.empty(shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k, s in enumerate(sigmas):
            for j, b in enumerate(b1_grid):
                d = stationary_density_1d(reduced, sigma=s, u_max=u_max, n=n, b1=b)
                ubar[k, j] = d.mean
                q10[k, j] = d.quantile(0.1)
                q90[k, j] = d.quantile(0.9)
    branches = []
    for b in b1_grid:
        eqs = find_equilibria(params.replace(b1=b), search_box=search_box)
        branches.append([(float(e.state[1]), e.stability) for e in eqs])
    return BifurcationCurve(b1_grid, tuple(float(s) for s in sigmas), ubar, q10, q90, branches)
