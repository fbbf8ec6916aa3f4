"""Variance and lag-1 autocorrelation of biomass under conditional sampling.

Only trajectories whose observed states stay inside the background region
after burn-in contribute; a parameter point with none retained is a gap.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import ModelParams, find_equilibria, phyto_system
from .pde import EllipseRegion, write_header
from .simulate import SimConfig, simulate_path, substream


@dataclass(frozen=True)
class Protocol:
    t_sim: float = 4000.0
    t_tr: float = 1000.0
    dt: float = 1e-2
    dt_obs: float = 1.0
    n_ens: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.t_tr < self.t_sim:
            raise ValueError("need 0 <= t_tr < t_sim")
        ratio = self.dt_obs / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
            raise ValueError("dt_obs must be a positive multiple of dt")

    @property
    def every(self) -> int:
        return int(round(self.dt_obs / self.dt))

    @property
    def n_obs(self) -> int:
        return int(round((self.t_sim - self.t_tr) / self.dt_obs))


def variance(x) -> float:
    """Unbiased sample variance."""
    return float(np.var(x, ddof=1))


def lag1_autocorrelation(x) -> float:
    """Pearson lag-1 autocorrelation of the mean-removed series.

    Returns NaN for a constant series.
    """
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    denom = np.dot(d, d)
    if denom == 0:
        return float("nan")
    return float(np.dot(d[:-1], d[1:]) / denom)


@dataclass(frozen=True)
class EwsPoint:
    b1: float
    sigma: float
    log10_var: float
    ac1: float
    n_valid: int
    n_ens: int

    @property
    def gap(self) -> bool:
        return self.n_valid == 0 or not (np.isfinite(self.log10_var) and np.isfinite(self.ac1))


def classic_ews(system, r_stay: EllipseRegion, protocol: Protocol = Protocol(),
                x0=None, b1: float = float("nan")) -> EwsPoint:
    """Ensemble-mean log10 variance and AC1 of ``u`` over retained members."""
    x0 = np.asarray(r_stay.center if x0 is None else x0, dtype=float)
    cfg = SimConfig(dt=protocol.dt, t_max=protocol.t_sim, seed=protocol.seed)
    every = protocol.every
    n_steps = int(round(protocol.t_sim / protocol.dt))
    skip = int(round(protocol.t_tr / protocol.dt_obs))
    logv, ac = [], []
    for i in range(protocol.n_ens):
        path = simulate_path(system, x0, cfg, every=every, n_steps=n_steps,
                             generator=substream(protocol.seed, i))
        obs = path[skip:]
        if not np.all(r_stay.contains(obs.T)):
            continue
        u = obs[:, -1]
        v = variance(u)
        r = lag1_autocorrelation(u)
        if v <= 0 or not np.isfinite(r):
            continue
        logv.append(np.log10(v))
        ac.append(r)
    sigma = float(system.sigma[-1]) if system.sigma else float("nan")
    if not logv:
        return EwsPoint(b1, sigma, float("nan"), float("nan"), 0, protocol.n_ens)
    return EwsPoint(b1, sigma, float(np.mean(logv)), float(np.mean(ac)), len(logv),
                    protocol.n_ens)


@dataclass(frozen=True)
class EnsembleEwsResult:
    points: tuple

    def series(self, sigma: float):
        pts = sorted((p for p in self.points if np.isclose(p.sigma, sigma)), key=lambda p: p.b1)
        b1 = np.array([p.b1 for p in pts])
        lv = np.array([np.nan if p.gap else p.log10_var for p in pts])
        ac = np.array([np.nan if p.gap else p.ac1 for p in pts])
        nv = np.array([p.n_valid for p in pts])
        return b1, lv, ac, nv

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(["b1", "sigma", "log10var", "ac1", "n_valid", "gap"])
            for p in self.points:
                w.writerow([p.b1, p.sigma, p.log10_var, p.ac1, p.n_valid, int(p.gap)])


def classic_ews_scan(params: ModelParams, b1_grid: Sequence[float], sigmas: Sequence[float],
                     protocol: Protocol = Protocol(), semi_axes=(0.018, 0.008),
                     noise_ratio: float = 1.0) -> EnsembleEwsResult:
    """:func:`classic_ews` over a ``(b1, sigma)`` grid, staying near the background state."""
    points = []
    for b1 in b1_grid:
        p = params.replace(b1=float(b1))
        e1 = find_equilibria(p).background.state
        region = EllipseRegion(e1, semi_axes)
        for s in sigmas:
            system = phyto_system(p.with_noise(float(s), noise_ratio))
            points.append(classic_ews(system, region, protocol, x0=e1, b1=float(b1)))
    return EnsembleEwsResult(tuple(points))


def normalize_scores(series) -> np.ndarray:
    """Min-max scaling to ``[0, 1]``; NaN gaps pass through."""
    x = np.asarray(series, dtype=float)
    ok = np.isfinite(x)
    if ok.sum() < 2:
        raise ValueError("need at least two non-gap values")
    lo, hi = x[ok].min(), x[ok].max()
    out = np.full_like(x, np.nan)
    if hi == lo:
        warnings.warn("constant series; returning 0.5", RuntimeWarning)
        out[ok] = 0.5
        return out
    out[ok] = (x[ok] - lo) / (hi - lo)
    return out
