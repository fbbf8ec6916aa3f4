"""Euler-Maruyama simulation, Monte Carlo passage times and histograms.

Every trajectory draws from its own substream
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on how
trajectories are distributed over worker threads.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .pde import EllipseRegion, write_header


class NoTransitionsError(RuntimeError):
    """Every trajectory was censored."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-2
    t_max: float = 1e6
    seed: int = 0
    n_traj: int = 1000
    boundary: str = "reflect-clamp"
    jobs: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be at least dt")
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if self.boundary != "reflect-clamp":
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trajectory ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _kernel_args(system):
    if system.kind is None:
        raise ValueError("system has no simulation kernel")
    sigma = np.ascontiguousarray(system.sigma, dtype=float)
    if sigma.size == 1:
        sigma = np.r_[sigma, 0.0]
    return (int(system.kind), np.ascontiguousarray(system.kernel_params, dtype=float), sigma,
            np.ascontiguousarray(system.lower, dtype=float),
            np.ascontiguousarray(system.upper, dtype=float))


def simulate_path(system, x0, cfg: SimConfig, every: int = 1, stream: int = 0,
                  n_steps: Optional[int] = None,
                  generator: Optional[np.random.Generator] = None) -> np.ndarray:
    """States after every ``every`` steps, shape ``(n_steps // every, dim)``.

    ``n_steps`` defaults to ``round(t_max / dt)``. Passing ``generator``
    continues an existing stream, so chunked runs equal one long run.
    """
    x0 = np.ascontiguousarray(np.atleast_1d(x0), dtype=float)
    if not np.all(system.contains(x0)):
        raise ValueError(f"initial state {x0} outside the domain")
    if n_steps is None:
        n_steps = int(round(cfg.t_max / cfg.dt))
    if every < 1:
        raise ValueError("every must be at least 1")
    rng = generator if generator is not None else substream(cfg.seed, stream)
    kind, params, sigma, lo, hi = _kernel_args(system)
    return kernels.em_path(kind, params, sigma, x0, lo, hi, cfg.dt, n_steps, every, rng)


def sample_in_ellipse(region: EllipseRegion, rng: np.random.Generator, lower=None) -> np.ndarray:
    """Uniform point in ``region`` by rejection from its bounding box."""
    c = np.asarray(region.center)
    r = np.asarray(region.semi_axes)
    while True:
        p = c + r * rng.uniform(-1.0, 1.0, size=c.size)
        if lower is not None and np.any(p < lower):
            continue
        if np.sum(((p - c) / r) ** 2) <= 1.0:
            return p


@dataclass(frozen=True)
class MfptEstimate:
    mean: float
    std_error: float
    censored_fraction: float
    n: int
    samples: np.ndarray = field(default=None, repr=False, compare=False)
    censored: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def relative_error(self) -> float:
        return self.std_error / self.mean

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(["traj_id", "tau", "censored"])
            for i, (t, c) in enumerate(zip(self.samples, self.censored)):
                w.writerow([i, repr(float(t)), int(c)])


def kaplan_meier_mean(times, censored, horizon: float):
    """Restricted mean of the KM survival curve on ``[0, horizon]`` and its
    Greenwood standard error."""
    times = np.asarray(times, dtype=float)
    censored = np.asarray(censored, dtype=bool)
    n = times.size
    event_t = np.sort(times[~censored])
    uniq, deaths = np.unique(event_t, return_counts=True)
    # at risk just before each event time
    at_risk = n - np.searchsorted(np.sort(times), uniq, side="left")
    surv = np.cumprod(1.0 - deaths / at_risk)
    knots = np.r_[0.0, uniq, horizon]
    s_steps = np.r_[1.0, surv]
    area = s_steps * np.diff(knots)
    mean = float(area.sum())
    tail = np.cumsum(area[::-1])[::-1][1:]  # area beyond each event time
    denom = at_risk * (at_risk - deaths)
    ok = (denom > 0) & (tail > 0)
    var = float(np.sum(tail[ok] ** 2 * deaths[ok] / denom[ok]))
    return mean, np.sqrt(var)


def _first_passage(system, region_start, region_target, cfg, index, args):
    kind, params, sigma, lo, hi = args
    rng = substream(cfg.seed, index)
    x0 = sample_in_ellipse(region_start, rng, lower=lo)
    center = np.ascontiguousarray(region_target.center, dtype=float)
    axes = np.ascontiguousarray(region_target.semi_axes, dtype=float)
    return kernels.em_first_passage(kind, params, sigma, x0, lo, hi, cfg.dt, cfg.t_max,
                                    center, axes, rng)


def mc_mfpt(system, r_start: EllipseRegion, r_target: EllipseRegion, cfg: SimConfig,
            first_index: int = 0) -> MfptEstimate:
    """Kaplan-Meier estimate of the mean passage time from ``r_start`` to ``r_target``."""
    c0, c1 = np.asarray(r_start.center), np.asarray(r_target.center)
    if r_target.contains(c0[:, None])[0] or r_start.contains(c1[:, None])[0]:
        raise ValueError("start and target regions overlap")
    args = _kernel_args(system)
    idx = range(first_index, first_index + cfg.n_traj)

    def run(i):
        return _first_passage(system, r_start, r_target, cfg, i, args)

    if cfg.jobs == 1:
        out = [run(i) for i in idx]
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            out = list(pool.map(run, idx))
    taus = np.array([t for t, _ in out])
    cens = np.array([c for _, c in out], dtype=bool)
    if cens.all():
        raise NoTransitionsError("no transitions observed; increase t_max or sigma")
    frac = float(cens.mean())
    if frac == 0:
        mean = float(taus.mean())
        se = float(taus.std(ddof=1) / np.sqrt(taus.size)) if taus.size > 1 else 0.0
    else:
        mean, se = kaplan_meier_mean(taus, cens, cfg.t_max)
    return MfptEstimate(mean, se, frac, taus.size, taus, cens)


# --------------------------------------------------------------------------
# histograms

@dataclass(frozen=True)
class Marginal:
    axis: str
    edges: np.ndarray
    mass: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def stationary_histogram(system, cfg: SimConfig, burn_in: float, bins: int = 200,
                         x0=None, chunk: int = 1_000_000, stream: int = 0):
    """Normalized marginal histograms of one long post-burn-in path."""
    if not burn_in < cfg.t_max:
        raise ValueError("burn_in must be shorter than t_max")
    lo, hi = np.asarray(system.lower), np.asarray(system.upper)
    x = np.asarray(x0 if x0 is not None else 0.5 * (lo + hi), dtype=float)
    rng = substream(cfg.seed, stream)
    n_burn = int(round(burn_in / cfg.dt))
    n_total = int(round(cfg.t_max / cfg.dt))
    edges = [np.linspace(lo[k], hi[k], bins + 1) for k in range(system.dim)]
    counts = [np.zeros(bins) for _ in range(system.dim)]
    done = 0
    while done < n_total:
        m = min(chunk, n_total - done)
        path = simulate_path(system, x, cfg, n_steps=m, generator=rng)
        x = path[-1]
        keep = path[max(0, n_burn - done):]
        for k in range(system.dim):
            counts[k] += np.histogram(keep[:, k], bins=edges[k])[0]
        done += m
    total = counts[0].sum()
    if total == 0:
        raise ValueError("no samples retained after burn-in")
    names = ["T", "u"] if system.dim == 2 else ["x"]
    return tuple(Marginal(names[k], edges[k], counts[k] / counts[k].sum())
                 for k in range(system.dim))


def histograms_to_csv(path, marginals, header: Optional[dict] = None) -> None:
    with open(path, "w", newline="") as fh:
        write_header(fh, header)
        w = csv.writer(fh)
        w.writerow(["axis", "bin_left", "bin_right", "mass"])
        for m in marginals:
            for a, b, v in zip(m.edges[:-1], m.edges[1:], m.mass):
                w.writerow([m.axis, repr(float(a)), repr(float(b)), repr(float(v))])
