"""Temperature-phytoplankton and Schlogl SDE systems.

The two-dimensional model couples an effective upper-ocean temperature ``T``
with phytoplankton biomass ``u``::

    dT = F_T dt + sigma_T dW_T,      F_T = (-a T^4 + b (1 - S(u))) / gamma
    du = F_u dt + sigma_u sqrt(u + delta) dW_u,   F_u = u (g(T) - mu - u)

with ``S(u) = s0 + (s1 - s0) exp(-alpha1 u)`` and
``g(T) = b1 exp(-T0/T - alpha2 T)``. All noise is Ito.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import kernels

PHYSICAL_DOMAIN = ((0.30, 0.0), (0.60, 0.13))


@dataclass(frozen=True)
class ModelParams:
    a: float = 1.0
    b: float = 0.3
    s0: float = 0.1
    s1: float = 0.95
    alpha1: float = 3.0
    T0: float = 1.0
    alpha2: float = 1.0
    gamma: float = 1.0
    mu: float = 0.1
    b1: float = 2.1
    delta: float = 1e-4
    sigma_T: float = 0.01
    sigma_u: float = 0.01

    def __post_init__(self):
        values = dataclasses.asdict(self)
        bad = [k for k, v in values.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite parameters: {bad}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.sigma_T < 0 or self.sigma_u < 0:
            raise ValueError("noise intensities must be non-negative")
        if not self.s0 < self.s1:
            raise ValueError("require s0 < s1")

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def with_noise(self, sigma: float, ratio: float = 1.0) -> "ModelParams":
        """Set ``sigma_u = sigma`` and ``sigma_T = ratio * sigma``."""
        return dataclasses.replace(self, sigma_T=ratio * sigma, sigma_u=sigma)

    def as_array(self) -> np.ndarray:
        """Parameter vector in the order the simulation kernels expect."""
        return np.array([self.a, self.b, self.s0, self.s1, self.alpha1, self.T0,
                         self.alpha2, self.gamma, self.mu, self.b1, self.delta])

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def albedo(u, p: ModelParams):
    return p.s0 + (p.s1 - p.s0) * np.exp(-p.alpha1 * u)


def growth(T, p: ModelParams):
    """Temperature-limited growth rate; zero for ``T <= 0``."""
    T = np.asarray(T, dtype=float)
    safe = np.where(T > 0, T, 1.0)
    return np.where(T > 0, p.b1 * np.exp(-p.T0 / safe - p.alpha2 * safe), 0.0)


def drift(state, params: ModelParams) -> np.ndarray:
    """Deterministic vector field ``(F_T, F_u)``.

    ``state`` has shape ``(2, ...)``; the result has the same shape.
    """
    out = _drift(state, params)
    if not np.all(np.isfinite(out)):
        raise ValueError("drift evaluated outside its domain (non-finite value)")
    return out


def _drift(state, params):
    T, u = np.asarray(state, dtype=float)
    f_t = (-params.a * T**4 + params.b * (1.0 - albedo(u, params))) / params.gamma
    f_u = u * (growth(T, params) - params.mu - u)
    return np.stack([f_t, f_u])


def jacobian(state, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of :func:`drift`, shape ``(2, 2, ...)``."""
    T, u = np.asarray(state, dtype=float)
    p = params
    g = growth(T, p)
    safe = np.where(T > 0, T, 1.0)
    dg = np.where(T > 0, g * (p.T0 / safe**2 - p.alpha2), 0.0)
    dS = -p.alpha1 * (p.s1 - p.s0) * np.exp(-p.alpha1 * u)
    j11 = -4.0 * p.a * T**3 / p.gamma
    j12 = -p.b * dS / p.gamma
    j21 = u * dg
    j22 = g - p.mu - 2.0 * u
    return np.array([[j11, j12], [j21, j22]])


def noise_factor(state, params: ModelParams) -> np.ndarray:
    """Diagonal of ``G``: ``(sigma_T, sigma_u sqrt(u + delta))``."""
    T, u = np.asarray(state, dtype=float)
    return np.stack([np.full_like(T, params.sigma_T),
                     params.sigma_u * np.sqrt(np.maximum(u, 0.0) + params.delta)])


@dataclass(frozen=True)
class SdeSystem:
    """Diagonal-noise Ito SDE on an axis-aligned box.

    ``drift`` and ``noise`` take an array of shape ``(dim, ...)`` and return
    the same shape; ``noise`` returns the diagonal of ``G``. ``kind`` and
    ``kernel_params`` let the simulation layer use a compiled kernel.
    """

    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    noise: Callable[[np.ndarray], np.ndarray]
    lower: tuple
    upper: tuple
    name: str = "custom"
    kind: Optional[int] = None
    kernel_params: Optional[np.ndarray] = field(default=None, compare=False)
    sigma: tuple = ()
    params: object = None
    separable: bool = True

    def diffusion(self, state) -> np.ndarray:
        """Diagonal of ``a = G G^T``."""
        return self.noise(state) ** 2

    def contains(self, state) -> np.ndarray:
        x = np.asarray(state, dtype=float)
        lo = np.asarray(self.lower, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        hi = np.asarray(self.upper, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
        return np.all((x >= lo) & (x <= hi), axis=0)

    def digest(self) -> str:
        payload = {"name": self.name, "lower": list(self.lower), "upper": list(self.upper),
                   "sigma": list(self.sigma)}
        if isinstance(self.params, ModelParams):
            payload["params"] = dataclasses.asdict(self.params)
        elif self.params is not None:
            payload["params"] = list(np.ravel(self.params))
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def phyto_system(params: ModelParams, lower=PHYSICAL_DOMAIN[0],
                 upper=PHYSICAL_DOMAIN[1]) -> SdeSystem:
    return SdeSystem(
        dim=2,
        drift=lambda x: drift(x, params),
        noise=lambda x: noise_factor(x, params),
        lower=tuple(float(v) for v in lower),
        upper=tuple(float(v) for v in upper),
        name="phyto",
        kind=kernels.PHYTO,
        kernel_params=params.as_array(),
        sigma=(params.sigma_T, params.sigma_u),
        params=params,
        separable=params.sigma_T == params.sigma_u,
    )


def schlogl_system(x1: float = 0.2, x2: float = 0.5, x3: float = 0.8,
                   sigma: float = 0.01, lower: float = 0.0, upper: float = 1.0) -> SdeSystem:
    """1D Schlogl model ``dX = -(X-x1)(X-x2)(X-x3) dt + sigma dW`` on ``[0, 1]``."""
    if not x1 < x2 < x3:
        raise ValueError("Schlogl roots must satisfy x1 < x2 < x3")
    roots = np.array([x1, x2, x3], dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float)
        return -(x - x1) * (x - x2) * (x - x3)

    return SdeSystem(
        dim=1,
        drift=f,
        noise=lambda x: np.full_like(np.asarray(x, dtype=float), sigma),
        lower=(float(lower),),
        upper=(float(upper),),
        name="schlogl",
        kind=kernels.SCHLOGL,
        kernel_params=roots,
        sigma=(float(sigma),),
        params=roots,
        separable=True,
    )


def schlogl_potential(x, x1=0.2, x2=0.5, x3=0.8):
    """Potential ``V`` with ``f = -V'`` for the Schlogl drift, ``V(0) = 0``."""
    x = np.asarray(x, dtype=float)
    e1 = x1 + x2 + x3
    e2 = x1 * x2 + x1 * x3 + x2 * x3
    e3 = x1 * x2 * x3
    # f = -(x^3 - e1 x^2 + e2 x - e3)
    return x**4 / 4 - e1 * x**3 / 3 + e2 * x**2 / 2 - e3 * x


# --------------------------------------------------------------------------
# equilibria

STABLE, SADDLE, UNSTABLE = "stable", "saddle", "unstable"


@dataclass(frozen=True)
class Equilibrium:
    state: np.ndarray
    stability: str
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class EquilibriumSet:
    equilibria: tuple
    warning: bool = False

    def __len__(self):
        return len(self.equilibria)

    def __iter__(self):
        return iter(self.equilibria)

    @property
    def stable(self):
        return [e for e in self.equilibria if e.stability == STABLE]

    @property
    def saddles(self):
        return [e for e in self.equilibria if e.stability == SADDLE]

    @property
    def background(self) -> Equilibrium:
        """Stable equilibrium with the lowest biomass (E1)."""
        return min(self.stable, key=lambda e: e.state[1])

    @property
    def bloom(self) -> Equilibrium:
        """Stable equilibrium with the highest biomass (E3)."""
        return max(self.stable, key=lambda e: e.state[1])

    @property
    def saddle(self) -> Equilibrium:
        s = self.saddles
        if not s:
            raise ValueError("not bistable: no saddle equilibrium")
        return min(s, key=lambda e: e.state[1])

    @property
    def bistable(self) -> bool:
        return len(self.stable) >= 2 and len(self.saddles) >= 1


def _classify(eigs, tol=1e-12):
    re = np.real(eigs)
    if np.all(re < -tol):
        return STABLE
    if np.all(re > tol):
        return UNSTABLE
    return SADDLE


def _newton(x, alive, params, max_iter):
    for _ in range(max_iter):
        f = _drift(x, params)
        J = np.moveaxis(jacobian(x, params), -1, 0)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        ok = np.abs(det) > 1e-300
        alive &= ok
        safe = np.where(ok, det, 1.0)
        dx0 = (J[:, 1, 1] * f[0] - J[:, 0, 1] * f[1]) / safe
        dx1 = (-J[:, 1, 0] * f[0] + J[:, 0, 0] * f[1]) / safe
        step = np.stack([dx0, dx1])
        # damp steps that would push T non-positive
        scale = np.ones(x.shape[1])
        bad = x[0] - step[0] <= 0.05
        scale[bad] = 0.5 * (x[0, bad] - 0.05) / np.maximum(step[0, bad], 1e-300)
        scale = np.clip(scale, 0.0, 1.0)
        x = x - scale * step
        x[0] = np.maximum(x[0], 0.05)
        if np.all(np.abs(step[:, alive]) < 1e-15):
            break
        alive &= np.all(np.isfinite(x), axis=0)
    return x, alive


def find_equilibria(params: ModelParams, search_box=PHYSICAL_DOMAIN, newton_tol: float = 1e-12,
                    seeds_per_axis: int = 20, max_iter: int = 100) -> EquilibriumSet:
    """All drift roots inside ``search_box`` via Newton from a seed lattice.

    Seeds that fail to converge, or converge outside the box, are dropped.
    """
    (t_lo, u_lo), (t_hi, u_hi) = search_box
    tt, uu = np.meshgrid(np.linspace(t_lo, t_hi, seeds_per_axis),
                         np.linspace(u_lo, u_hi, seeds_per_axis), indexing="ij")
    x = np.stack([tt.ravel(), uu.ravel()])
    alive = np.ones(x.shape[1], dtype=bool)
    with np.errstate(all="ignore"):
        x, alive = _newton(x, alive, params, max_iter)
        res = np.linalg.norm(_drift(x, params), axis=0)
    pad = 1e-9
    inside = ((x[0] >= t_lo - pad) & (x[0] <= t_hi + pad)
              & (x[1] >= u_lo - pad) & (x[1] <= u_hi + pad))
    good = alive & np.isfinite(res) & (res < max(newton_tol, 1e-10)) & inside
    roots = []
    for r in x[:, good].T:
        if all(np.linalg.norm(r - q) > 1e-6 for q in roots):
            roots.append(r.copy())
    roots.sort(key=lambda r: (r[1], r[0]))
    out = []
    for r in roots:
        if abs(r[1]) < 1e-12:
            r[1] = 0.0
        eigs = np.linalg.eigvals(jacobian(r, params))
        out.append(Equilibrium(state=r, stability=_classify(eigs), eigenvalues=eigs))
    if not out:
        warnings.warn("no equilibria found in the search box", RuntimeWarning)
    return EquilibriumSet(tuple(out), warning=not out)


WIDE_BOX = ((0.05, 0.0), (1.0, 1.0))


def bistable_window(params: ModelParams, b1_lo: float = 1.9, b1_hi: float = 2.6,
                    step: float = 0.002, tol: float = 1e-6, search_box=WIDE_BOX) -> tuple:
    """Endpoints of the ``b1`` interval with two stable equilibria.

    Coarse scan at ``step`` followed by bisection on each change in the
    stable count. The search box is wider than the plotting domain because
    the bloom state leaves ``u <= 0.13`` before the window closes.
    """
    def n_stable(b1):
        return len(find_equilibria(params.replace(b1=b1), search_box=search_box).stable)

    grid = np.arange(b1_lo, b1_hi + step / 2, step)
    counts = [n_stable(b) for b in grid]
    edges = []
    for i in range(1, len(grid)):
        if (counts[i] >= 2) != (counts[i - 1] >= 2):
            lo, hi = grid[i - 1], grid[i]
            lo_bi = counts[i - 1] >= 2
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if (n_stable(mid) >= 2) == lo_bi:
                    lo = mid
                else:
                    hi = mid
            edges.append(0.5 * (lo + hi))
    if len(edges) != 2:
        raise ValueError(f"expected two window endpoints, found {edges}")
    return tuple(edges)


# --------------------------------------------------------------------------
# deterministic separatrix

def deterministic_separatrix(params: ModelParams, lower=PHYSICAL_DOMAIN[0],
                             upper=PHYSICAL_DOMAIN[1], step: Optional[float] = None,
                             offset: float = 1e-5, t_end: float = 1e5):
    """Stable manifold of the saddle, traced backward in time to the box edge.

    Returns a :class:`geomews.geometry.Polyline` whose consecutive vertices
    are at most ``step`` apart (default: the 141-node grid spacing).
    """
    from .geometry import Polyline

    eqs = find_equilibria(params, search_box=(lower, upper))
    if not eqs.bistable:
        raise ValueError("not bistable: no saddle equilibrium")
    saddle = eqs.saddle
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if step is None:
        step = float(np.min((hi - lo) / 140))
    vals, vecs = np.linalg.eig(jacobian(saddle.state, params))
    v = np.real(vecs[:, np.argmin(np.real(vals))])
    v /= np.linalg.norm(v)

    def rhs(t, x):
        return -drift(x, params)

    def leave(t, x):
        return min(np.min(x - lo), np.min(hi - x))

    leave.terminal = True
    leave.direction = -1

    def slow(t, x):
        return np.linalg.norm(drift(x, params)) - 1e-10

    slow.terminal = True
    slow.direction = -1

    branches = []
    for sgn in (1.0, -1.0):
        x0 = saddle.state + sgn * offset * v
        sol = solve_ivp(rhs, (0.0, t_end), x0, method="RK45", rtol=1e-9, atol=1e-12,
                        dense_output=True, events=(leave, slow))
        t = np.linspace(0.0, sol.t[-1], 20000)
        pts = sol.sol(t).T
        if sol.t_events[0].size:
            pts[-1] = np.clip(sol.y_events[0][0], lo, hi)
        pts = np.clip(pts, lo, hi)
        branches.append(_resample(pts, step))
    verts = np.vstack([branches[0][::-1], saddle.state[None, :], branches[1]])
    keep = np.r_[True, np.linalg.norm(np.diff(verts, axis=0), axis=1) > 0]
    return Polyline(verts[keep])


def _resample(pts, step):
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.r_[0.0, np.cumsum(seg)]
    if s[-1] == 0:
        return pts[:1]
    n = max(int(np.ceil(s[-1] / step)), 1)
    target = np.linspace(0.0, s[-1], n + 1)
    return np.stack([np.interp(target, s, pts[:, k]) for k in range(pts.shape[1])], axis=1)


# --------------------------------------------------------------------------
# quasi-steady 1D reduction

@dataclass(frozen=True)
class Reduced1DModel:
    params: ModelParams

    def t_star(self, u):
        p = self.params
        rad = p.b * (1.0 - albedo(np.asarray(u, dtype=float), p)) / p.a
        if np.any(rad < 0):
            raise ValueError("negative radicand in quasi-steady temperature")
        return rad**0.25

    def f(self, u, b1: Optional[float] = None):
        p = self.params if b1 is None else self.params.replace(b1=b1)
        u = np.asarray(u, dtype=float)
        return u * (growth(self.t_star(u), p) - u) - p.mu * u

    def D(self, u):
        p = self.params
        return 0.5 * p.sigma_u**2 * (np.asarray(u, dtype=float) + p.delta)


def reduce_1d(params: ModelParams) -> Reduced1DModel:
    return Reduced1DModel(params)


PRESETS = {
    "phyto": lambda **kw: phyto_system(ModelParams(**kw)),
    "schlogl": lambda **kw: schlogl_system(**kw),
}
