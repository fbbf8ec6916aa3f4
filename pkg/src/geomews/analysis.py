"""Regressions, hinge breakpoints, the scaling pipeline and sweep drivers."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import curve_distance, ews_geom, extract_separatrix
from .model import ModelParams, find_equilibria, phyto_system, schlogl_system
from .pde import (EllipseRegion, FieldCache, Grid, assemble_generator, region_average,
                  solve_committor, solve_mfpt, write_header)

DEFAULT_SIGMAS = tuple(np.round(np.arange(0.005, 0.02501, 0.0025), 6))
DEFAULT_AXES = (0.018, 0.008)
DEFAULT_DOMAIN = ((0.30, 0.0), (0.60, 0.13))


# --------------------------------------------------------------------------
# regressions

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n: int


def _r_squared(y, yhat):
    tss = np.sum((y - y.mean()) ** 2)
    if tss == 0:
        return float("nan")
    return float(1.0 - np.sum((y - yhat) ** 2) / tss)


def linear_fit(x, y, through_origin: bool = False) -> FitResult:
    """Ordinary least squares; ``R^2 = 1 - RSS/TSS`` with the centred TSS."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ValueError("need at least two paired points")
    if through_origin:
        if not np.any(x):
            raise ValueError("x is identically zero")
        slope = float(x @ y / (x @ x))
        return FitResult(slope, 0.0, _r_squared(y, slope * x), x.size)
    if np.ptp(x) == 0:
        raise ValueError("x is constant")
    A = np.c_[x, np.ones_like(x)]
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return FitResult(float(slope), float(intercept), _r_squared(y, A @ [slope, intercept]), x.size)


@dataclass(frozen=True)
class HingeFit:
    breakpoint: float
    interval: tuple
    candidates: np.ndarray
    bic: np.ndarray
    left_slope: float
    right_slope: float

    @property
    def delta_bic(self) -> np.ndarray:
        return self.bic - self.bic.min()


def _hinge_design(x, k):
    return np.c_[np.ones_like(x), x, np.maximum(0.0, x - k)]


def hinge_fit_bic(x, y, n_params: int = 4) -> HingeFit:
    """Continuous two-segment fit with the breakpoint chosen by BIC.

    Candidates are the interior sample points. ``BIC = n ln(RSS/n) + p ln n``
    with ``p = 4`` and RSS floored at 1e-300.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    order = np.argsort(x)
    x, y = x[order], y[order]
    n = x.size
    if n < 6:
        raise ValueError("hinge fit needs at least 6 points")
    cand = x[1:-1]
    bic = np.empty(cand.size)
    coefs = []
    for j, k in enumerate(cand):
        A = _hinge_design(x, k)
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        rss = max(float(np.sum((y - A @ beta) ** 2)), 1e-300)
        bic[j] = n * math.log(rss / n) + n_params * math.log(n)
        coefs.append(beta)
    best = int(np.argmin(bic))
    within = cand[bic <= bic[best] + 2.0]
    beta = coefs[best]
    return HingeFit(float(cand[best]), (float(within.min()), float(within.max())), cand, bic,
                    float(beta[1]), float(beta[1] + beta[2]))


# --------------------------------------------------------------------------
# scaling law

@dataclass(frozen=True)
class ScalingReport:
    delta: float
    K: float
    c1: float
    c2_fit: float
    c2_pred: float
    rel_err: float
    r2_i: float
    r2_ii: float
    r2_iii: float
    sigma_max: Optional[float] = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, path, header: Optional[dict] = None) -> None:
        payload = {"header": header or {}, "report": self.to_dict()}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def scaling_pipeline(sigma, log_tau, ews) -> ScalingReport:
    """Fits ``log tau ~ 1/sigma^2``, ``EWS ~ sigma`` (through the origin) and
    ``log tau ~ 1/EWS^2``; compares the last slope with ``Delta K^2``."""
    sigma = np.asarray(sigma, dtype=float)
    log_tau = np.asarray(log_tau, dtype=float)
    ews = np.asarray(ews, dtype=float)
    if sigma.size < 3:
        raise ValueError("scaling pipeline needs at least 3 noise levels")
    fi = linear_fit(1.0 / sigma**2, log_tau)
    fii = linear_fit(sigma, ews, through_origin=True)
    fiii = linear_fit(1.0 / ews**2, log_tau)
    pred = fi.slope * fii.slope**2
    return ScalingReport(fi.slope, fii.slope, fiii.intercept, fiii.slope, pred,
                         abs(fiii.slope - pred) / abs(pred), fi.r_squared, fii.r_squared,
                         fiii.r_squared)


@dataclass(frozen=True)
class ValidityResult:
    sigma_max: float
    ratios: np.ndarray
    max_deviation: np.ndarray
    separable: bool


def validity_check(sigma, ews, tol: float = 0.05, separable: bool = True) -> ValidityResult:
    """Largest ``sigma`` whose ``EWS/sigma`` ratios up to it stay within ``tol``
    of their mean."""
    sigma = np.asarray(sigma, dtype=float)
    ews = np.asarray(ews, dtype=float)
    order = np.argsort(sigma)
    sigma, ews = sigma[order], ews[order]
    ratios = ews / sigma
    dev = np.array([np.max(np.abs(ratios[:j + 1] / ratios[:j + 1].mean() - 1.0))
                    for j in range(sigma.size)])
    ok = np.flatnonzero(dev < tol)
    sigma_max = float(sigma[ok[-1]]) if ok.size else float("nan")
    return ValidityResult(sigma_max, ratios, dev, separable)


# --------------------------------------------------------------------------
# finite-difference sweeps

@dataclass
class SweepRecord:
    b1: float
    sigma: float
    ews_geom: float = float("nan")
    mdb: float = float("nan")
    mds: float = float("nan")
    log_tau_fdm: float = float("nan")
    log_tau_mc: float = float("nan")
    mc_se: float = float("nan")
    var: float = float("nan")
    ac1: float = float("nan")
    flags: str = ""


def records_to_csv(path, records: Sequence[SweepRecord], header: Optional[dict] = None) -> None:
    names = [f.name for f in dataclasses.fields(SweepRecord)]
    with open(path, "w", newline="") as fh:
        write_header(fh, header)
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow([getattr(r, k) for k in names])


def records_from_csv(path) -> list:
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    out = []
    for row in csv.DictReader(rows):
        kw = {k: (v if k == "flags" else float(v)) for k, v in row.items()}
        out.append(SweepRecord(**kw))
    return out


@dataclass(frozen=True)
class FdmSetup:
    """Everything that defines one committor/MFPT solve except ``b1`` and ``sigma``."""

    n: int = 141
    lower: tuple = DEFAULT_DOMAIN[0]
    upper: tuple = DEFAULT_DOMAIN[1]
    semi_axes: tuple = DEFAULT_AXES
    noise_ratio: float = 1.0
    alpha: float = 0.1
    upwind: bool = False

    @property
    def grid(self) -> Grid:
        return Grid.square(self.lower, self.upper, self.n)


@dataclass
class FdmResult:
    b1: float
    sigma: float
    log_tau: float
    ews: float
    committor: object = field(repr=False)
    separatrix: object = field(repr=False)
    tau: object = field(repr=False, default=None)


def fdm_point(params: ModelParams, sigma: float, setup: FdmSetup = FdmSetup(),
              cache: Optional[FieldCache] = None, want_tau: bool = True) -> FdmResult:
    """Committor, separatrix, EWS_geom and region-averaged MFPT at one point."""
    p = params.with_noise(sigma, setup.noise_ratio)
    system = phyto_system(p, setup.lower, setup.upper)
    grid = setup.grid
    eqs = find_equilibria(p, search_box=(setup.lower, setup.upper))
    if not eqs.bistable:
        raise ValueError(f"not bistable at b1={p.b1}")
    r1 = EllipseRegion(eqs.background.state, setup.semi_axes)
    r3 = EllipseRegion(eqs.bloom.state, setup.semi_axes)
    extra = {"axes": list(setup.semi_axes), "upwind": setup.upwind}
    q = tau = None
    if cache is not None:
        kq = FieldCache.key(p.digest(), grid, system.sigma, p.b1, "committor", extra)
        kt = FieldCache.key(p.digest(), grid, system.sigma, p.b1, "mfpt", extra)
        q = cache.load(kq, grid)
        tau = cache.load(kt, grid) if want_tau else None
    op = None
    if q is None or (want_tau and tau is None):
        op = assemble_generator(system, grid, upwind=setup.upwind)
    if q is None:
        q = solve_committor(op, r1, r3)
        if cache is not None:
            cache.save(kq, q)
    if want_tau and tau is None:
        tau = solve_mfpt(op, r3)
        if cache is not None:
            cache.save(kt, tau)
    gamma = extract_separatrix(q)
    ews = ews_geom(q, gamma, setup.alpha)
    log_tau = math.log(region_average(tau, r1)) if want_tau else float("nan")
    return FdmResult(p.b1, sigma, log_tau, ews, q, gamma, tau)


def sigma_sweep(params: ModelParams, sigmas=DEFAULT_SIGMAS, setup: FdmSetup = FdmSetup(),
                cache: Optional[FieldCache] = None) -> list:
    return [fdm_point(params, s, setup, cache) for s in sigmas]


def sweep_report(results: Sequence[FdmResult]) -> ScalingReport:
    s = np.array([r.sigma for r in results])
    lt = np.array([r.log_tau for r in results])
    ew = np.array([r.ews for r in results])
    rep = scaling_pipeline(s, lt, ew)
    return dataclasses.replace(rep, sigma_max=validity_check(s, ew).sigma_max)


def indicator_scan(params: ModelParams, b1_grid, sigmas, setup: FdmSetup = FdmSetup(),
                   sigma_ref: float = 0.005, cache: Optional[FieldCache] = None,
                   deterministic=None) -> list:
    """EWS_geom, MDB and MDS over a ``(b1, sigma)`` grid (no MFPT solves)."""
    from .model import deterministic_separatrix

    records = []
    for b1 in b1_grid:
        p = params.replace(b1=float(b1))
        try:
            det = deterministic_separatrix(p, setup.lower, setup.upper) \
                if deterministic is None else deterministic(p)
        except ValueError as exc:
            records += [SweepRecord(float(b1), float(s), flags=f"no-separatrix:{exc}")
                        for s in sigmas]
            continue
        ref = fdm_point(p, sigma_ref, setup, cache, want_tau=False).separatrix
        for s in sigmas:
            rec = SweepRecord(float(b1), float(s))
            try:
                r = fdm_point(p, float(s), setup, cache, want_tau=False)
            except ValueError as exc:
                rec.flags = f"failed:{exc}"
            else:
                rec.ews_geom = r.ews
                rec.mdb = curve_distance(r.separatrix, det)
                rec.mds = curve_distance(r.separatrix, ref)
            records.append(rec)
    return records


# --------------------------------------------------------------------------
# robustness

def padded_domain(fraction: float, lower=DEFAULT_DOMAIN[0], upper=DEFAULT_DOMAIN[1]):
    """Grow each extent by ``fraction``; T on both sides, u upward only."""
    (t0, u0), (t1, u1) = lower, upper
    dT = 0.5 * fraction * (t1 - t0)
    return (t0 - dT, u0), (t1 + dT, u1 + fraction * (u1 - u0))


def robustness_variations():
    """Named ``(setup changes, parameter changes)`` pairs."""
    out = [
        ("grid 101", {"n": 101}, {}),
        ("grid 181", {"n": 181}, {}),
    ]
    for f in (0.10, 0.30):
        lo, hi = padded_domain(f)
        out.append((f"domain +{int(round(f * 100))}%", {"lower": lo, "upper": hi}, {}))
    out += [("delta 5e-5", {}, {"delta": 5e-5}), ("delta 2e-4", {}, {"delta": 2e-4})]
    for k in (0.5, 3.0):
        out.append((f"kappa {k}", {"semi_axes": (DEFAULT_AXES[0] * k, DEFAULT_AXES[1] * k)}, {}))
    out += [("sigma_T = 2 sigma_u", {"noise_ratio": 2.0}, {}),
            ("sigma_T = 0.5 sigma_u", {"noise_ratio": 0.5}, {}),
            ("sigma_T = 0.5 sigma_u (upwind)", {"noise_ratio": 0.5, "upwind": True}, {})]
    return out


@dataclass(frozen=True)
class RobustnessRow:
    variation: str
    c2_fit: float
    slope_change_pct: float
    r2: float
    error: str = ""


def robustness_suite(params: ModelParams, sigmas=DEFAULT_SIGMAS,
                     base: FdmSetup = FdmSetup(), cache: Optional[FieldCache] = None,
                     variations=None) -> tuple:
    """Rerun the scaling pipeline under each variation; slope means ``c2_fit``.

    A variation that switches the differencing scheme is compared with a base
    run using the same scheme.
    """
    refs = {}

    def reference(upwind):
        if upwind not in refs:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                refs[upwind] = sweep_report(sigma_sweep(
                    params, sigmas, dataclasses.replace(base, upwind=upwind), cache))
        return refs[upwind]

    ref = reference(base.upwind)
    rows = []
    for name, setup_kw, param_kw in (variations or robustness_variations()):
        setup = dataclasses.replace(base, **setup_kw)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = sweep_report(sigma_sweep(params.replace(**param_kw), sigmas, setup, cache))
            own = reference(setup.upwind)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rows.append(RobustnessRow(name, float("nan"), float("nan"), float("nan"), str(exc)))
            continue
        change = 100.0 * (rep.c2_fit - own.c2_fit) / own.c2_fit
        rows.append(RobustnessRow(name, rep.c2_fit, change, rep.r2_iii))
    return ref, rows


def robustness_to_csv(path, rows, header: Optional[dict] = None) -> None:
    with open(path, "w", newline="") as fh:
        write_header(fh, header)
        w = csv.writer(fh)
        w.writerow(["variation", "c2_fit", "slope_change_pct", "r2", "error"])
        for r in rows:
            w.writerow([r.variation, r.c2_fit, r.slope_change_pct, r.r2, r.error])


# --------------------------------------------------------------------------
# one-dimensional benchmark

def schlogl_sweep(sigmas=DEFAULT_SIGMAS, roots=(0.2, 0.5, 0.8), n: int = 4001,
                  radius: float = 0.015, alpha: float = 0.1) -> tuple:
    """Region-averaged ``log tau`` and separatrix width for the Schlogl model.

    Returns ``(log_tau, ews)`` arrays aligned with ``sigmas``.
    """
    x1, _, x3 = roots
    grid = Grid.square(0.0, 1.0, n)
    start = EllipseRegion((x1,), (radius,))
    target = EllipseRegion((x3,), (radius,))
    log_tau, ews = [], []
    for s in sigmas:
        op = assemble_generator(schlogl_system(*roots, sigma=float(s)), grid)
        tau = solve_mfpt(op, target)
        q = solve_committor(op, start, target)
        log_tau.append(math.log(region_average(tau, start)))
        ews.append(ews_geom(q, alpha=alpha))
    return np.array(log_tau), np.array(ews)
