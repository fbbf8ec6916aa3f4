"""Backward Kolmogorov generator on uniform grids; committor and MFPT solves.

The generator ``L = F . grad + (1/2) a : Hess`` is discretized with centred
differences. Outer boundaries are reflecting: a ghost node mirrors its
interior neighbour, so boundary rows see ``2 (phi_1 - phi_0) / h^2`` and no
first-derivative term.
"""
from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform node-based grid on an axis-aligned box."""

    lower: tuple
    upper: tuple
    n: tuple

    def __post_init__(self):
        if not len(self.lower) == len(self.upper) == len(self.n):
            raise ValueError("lower, upper and n must have equal length")
        if any(k < 3 for k in self.n):
            raise ValueError("need at least 3 nodes per axis")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("empty grid extent")

    @classmethod
    def square(cls, lower, upper, n: int) -> "Grid":
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        return cls(lower, upper, (int(n),) * len(lower))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return tuple(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (k - 1) for lo, hi, k in zip(self.lower, self.upper, self.n)])

    @property
    def axes(self) -> list:
        return [np.linspace(lo, hi, k) for lo, hi, k in zip(self.lower, self.upper, self.n)]

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"))

    def key(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "n": list(self.n)}


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        names = ["T", "u"] if self.grid.dim == 2 else ["x"]
        pts = self.grid.mesh().reshape(self.grid.dim, -1)
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(names + ["value"])
            for row in zip(*pts, self.values.ravel()):
                w.writerow([repr(float(c)) for c in row])

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "ScalarField":
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=_header_lines(path) + 1)
        return cls(grid, data[:, -1])


def write_header(fh, header: Optional[dict]) -> None:
    """Write ``# key: value`` comment lines (config hash, seed, version)."""
    for k, v in (header or {}).items():
        fh.write(f"# {k}: {v}\n")


def _header_lines(path) -> int:
    n = 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            n += 1
    return n


@dataclass(frozen=True)
class EllipseRegion:
    """Axis-aligned ellipse (interval in 1D) around ``center``."""

    center: tuple
    semi_axes: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        r = tuple(float(v) for v in np.atleast_1d(self.semi_axes))
        if len(c) != len(r):
            raise ValueError("center and semi_axes differ in dimension")
        if any(v <= 0 for v in r):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "semi_axes", r)

    def contains(self, points) -> np.ndarray:
        """Membership for points of shape ``(dim, ...)``; ``u >= 0`` enforced in 2D."""
        x = np.asarray(points, dtype=float)
        r2 = sum(((x[k] - c) / r) ** 2 for k, (c, r) in enumerate(zip(self.center, self.semi_axes)))
        inside = r2 <= 1.0 + 1e-12
        if len(self.center) == 2:
            inside &= x[1] >= 0.0
        return inside

    def mask(self, grid: Grid) -> np.ndarray:
        return self.contains(grid.mesh())


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse generator matrix over all grid nodes.

    ``matrix`` has the generator rows for every node; Dirichlet data are
    applied at solve time, where fixed rows become identity rows. In 1D the
    off-diagonal bands ``lower_band`` (coefficient of ``phi_{i-1}``) and
    ``upper_band`` are kept for the ordered tridiagonal solver.
    """

    grid: Grid
    matrix: sp.csr_matrix
    lower_band: Optional[np.ndarray] = None
    upper_band: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float).ravel()
        return (self.matrix @ v).reshape(self.grid.shape)

    def dirichlet_system(self, fixed: np.ndarray, fixed_values: np.ndarray, rhs: np.ndarray):
        """Full system with identity rows at ``fixed`` nodes."""
        fixed = fixed.ravel()
        keep = sp.diags((~fixed).astype(float))
        A = (keep @ self.matrix + sp.diags(fixed.astype(float))).tocsr()
        b = np.where(fixed, fixed_values.ravel(), rhs.ravel())
        return A, b


def assemble_generator(system, grid: Grid, upwind: bool = False) -> DiscreteOperator:
    """Centred five-point (three-point in 1D) generator with mirror boundaries."""
    if grid.dim != system.dim:
        raise ValueError("grid and system dimensions differ")
    lo, hi = np.asarray(system.lower), np.asarray(system.upper)
    if np.any(np.asarray(grid.lower) > lo + 1e-12) or np.any(np.asarray(grid.upper) < hi - 1e-12):
        warnings.warn("grid does not cover the system domain", RuntimeWarning)
    if upwind:
        warnings.warn("first-order upwinding enabled; results deviate from the centred scheme",
                      RuntimeWarning)
    x = grid.mesh()
    with np.errstate(all="ignore"):
        f = np.asarray(system.drift(x if grid.dim == 2 else x[0]), dtype=float).reshape(x.shape)
        d = 0.5 * np.asarray(system.diffusion(x if grid.dim == 2 else x[0]),
                             dtype=float).reshape(x.shape)
    for name, arr in (("drift", f), ("diffusion", d)):
        bad = ~np.isfinite(arr)
        if bad.any():
            node = tuple(int(i) for i in np.argwhere(bad.any(axis=0))[0])
            coords = tuple(float(c[node]) for c in x)
            raise ValueError(f"non-finite {name} coefficient at node {node} {coords}")

    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(grid.shape)
    bands = None
    for k, h in enumerate(grid.spacing):
        n = grid.n[k]
        i = np.arange(n)
        ip = np.where(i == n - 1, n - 2, i + 1)
        im = np.where(i == 0, 1, i - 1)
        if upwind:
            cp = np.maximum(f[k], 0) / h + d[k] / h**2
            cm = np.maximum(-f[k], 0) / h + d[k] / h**2
        else:
            cp = f[k] / (2 * h) + d[k] / h**2
            cm = -f[k] / (2 * h) + d[k] / h**2
        take_p = [slice(None)] * grid.dim
        take_m = [slice(None)] * grid.dim
        take_p[k], take_m[k] = ip, im
        rows += [idx.ravel(), idx.ravel()]
        cols += [idx[tuple(take_p)].ravel(), idx[tuple(take_m)].ravel()]
        vals += [cp.ravel(), cm.ravel()]
        diag -= cp + cm
        if grid.dim == 1:
            lower_band = cm.copy()
            upper_band = cp.copy()
            # mirror rows: both ghost contributions land on the single neighbour
            lower_band[-1] += cp[-1]
            upper_band[0] += cm[0]
            lower_band[0] = 0.0
            upper_band[-1] = 0.0
            bands = (lower_band, upper_band)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(grid.size, grid.size))
    L.sum_duplicates()
    return DiscreteOperator(grid, L, *(bands or (None, None)),
                            meta={"upwind": upwind, "system": getattr(system, "digest", lambda: "")()})


# --------------------------------------------------------------------------
# solvers

def _region_mask(region: EllipseRegion, grid: Grid, label: str) -> np.ndarray:
    m = region.mask(grid)
    if not m.any():
        raise ValueError(f"{label} region contains no grid nodes")
    return m


def _check_residual(op: DiscreteOperator, fixed, values, fixed_values, rhs):
    A, b = op.dirichlet_system(fixed, fixed_values, rhs)
    v = values.ravel()
    r = np.abs(A @ v - b).max()
    # relative to the size of the terms in each row
    norm = (abs(A) @ np.abs(v)).max() + np.abs(b).max()
    rel = r / norm if norm > 0 else r
    if not rel < RESIDUAL_TOL:
        raise np.linalg.LinAlgError(f"linear solve residual {rel:.3e} exceeds {RESIDUAL_TOL}")
    return rel


def _sparse_solve(op: DiscreteOperator, fixed, fixed_values, rhs):
    free = ~fixed.ravel()
    L = op.matrix
    A = L[free][:, free].tocsc()
    b = rhs.ravel()[free] - L[free][:, ~free] @ fixed_values.ravel()[~free]
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"singular system: {exc}") from exc
    x = fixed_values.ravel().astype(float).copy()
    x[free] = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise np.linalg.LinAlgError("singular system: non-finite solution")
    return x


def _runs(mask):
    """Maximal runs of True in a 1D boolean array as (start, stop) pairs."""
    d = np.diff(np.r_[0, mask.astype(int), 0])
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1))


def _ordered_solve_1d(cm, cp, fixed, fixed_values, rhs):
    """Solve a 1D generator system with differences ``d_i = phi_{i+1} - phi_i``.

    Each free run is swept from its reflecting end, or normalized between two
    Dirichlet ends, so no cancellation occurs even when the solution spans
    many orders of magnitude. ``cm``/``cp`` are the couplings to the left and
    right neighbours; rows sum to zero.
    """
    n = cm.size
    phi = np.where(fixed, fixed_values, 0.0).astype(float)
    for i0, i1 in _runs(~fixed):
        left_fixed = i0 > 0
        right_fixed = i1 < n - 1
        if not (left_fixed or right_fixed):
            raise np.linalg.LinAlgError("singular system: no Dirichlet node")
        if right_fixed and not left_fixed:
            phi[i0:i1 + 1] = _sweep(cm[i0:i1 + 1], cp[i0:i1 + 1], rhs[i0:i1 + 1], phi[i1 + 1])
        elif left_fixed and not right_fixed:
            seg = _sweep(cp[i0:i1 + 1][::-1], cm[i0:i1 + 1][::-1], rhs[i0:i1 + 1][::-1],
                         phi[i0 - 1])
            phi[i0:i1 + 1] = seg[::-1]
        else:
            phi[i0:i1 + 1] = _bridge(cm[i0:i1 + 1], cp[i0:i1 + 1], rhs[i0:i1 + 1],
                                     phi[i0 - 1], phi[i1 + 1])
    return phi


def _sweep(cm, cp, r, right_value):
    """Reflecting left end at index 0, Dirichlet value just past the right end."""
    m = cm.size
    d = np.empty(m)
    d[0] = r[0] / cp[0]  # mirror row: cp[0] already holds both couplings
    for i in range(1, m):
        d[i] = (r[i] + cm[i] * d[i - 1]) / cp[i]
    return right_value - np.cumsum(d[::-1])[::-1]


def _bridge(cm, cp, r, left_value, right_value):
    """Dirichlet values on both sides of the run."""
    m = cm.size
    # d_{-1}, d_0..d_{m-1}: m+1 differences summing to right - left
    logg = np.zeros(m + 1)
    logg[1:] = np.cumsum(np.log(cm / cp))
    p = np.zeros(m + 1)
    for i in range(m):
        p[i + 1] = (r[i] + cm[i] * p[i]) / cp[i]
    total = right_value - left_value - p.sum()
    lse = logsumexp(logg)
    d = p + np.sign(total) * np.exp(logg - lse + np.log(abs(total))) if total != 0 else p
    return left_value + np.cumsum(d)[:-1]


def _solve(op: DiscreteOperator, fixed, fixed_values, rhs):
    fixed = np.asarray(fixed).reshape(op.grid.shape)
    if op.grid.dim == 1 and op.lower_band is not None:
        cm, cp = op.lower_band, op.upper_band
        free = ~fixed
        i = np.arange(cm.size)
        if np.all(cm[free & (i > 0)] > 0) and np.all(cp[free & (i < cm.size - 1)] > 0):
            return _ordered_solve_1d(cm, cp, fixed, fixed_values.ravel(), rhs.ravel())
        warnings.warn("cell Peclet number above 2; using sparse LU", RuntimeWarning)
    return _sparse_solve(op, fixed, fixed_values, rhs)


def solve_committor(op: DiscreteOperator, source: EllipseRegion, target: EllipseRegion,
                    clip: bool = True) -> ScalarField:
    """Probability of reaching ``target`` before ``source``.

    With ``clip`` the values are truncated to ``[0, 1]``; the raw extremes are
    kept in ``meta``.
    """
    grid = op.grid
    m0 = _region_mask(source, grid, "source")
    m1 = _region_mask(target, grid, "target")
    if np.any(m0 & m1):
        raise ValueError("overlapping source and target regions")
    fixed = m0 | m1
    fv = m1.astype(float)
    rhs = np.zeros(grid.shape)
    q = _solve(op, fixed, fv, rhs).reshape(grid.shape)
    res = _check_residual(op, fixed, q, fv, rhs)
    meta = {"raw_min": float(q.min()), "raw_max": float(q.max()), "residual": res}
    if clip:
        q = np.clip(q, 0.0, 1.0)
    return ScalarField(grid, q, meta)


def solve_mfpt(op: DiscreteOperator, target: EllipseRegion) -> ScalarField:
    """Mean first passage time into ``target``."""
    grid = op.grid
    m1 = _region_mask(target, grid, "target")
    fv = np.zeros(grid.shape)
    rhs = -np.ones(grid.shape)
    tau = _solve(op, m1, fv, rhs).reshape(grid.shape)
    res = _check_residual(op, m1, tau, fv, rhs)
    if tau.min() < 0:
        raise np.linalg.LinAlgError(
            f"negative MFPT {tau.min():.3e}: discretization lost monotonicity")
    return ScalarField(grid, tau, {"residual": res})


def region_average(field: ScalarField, region: EllipseRegion) -> float:
    """Arithmetic mean of node values inside ``region``."""
    m = region.mask(field.grid)
    if not m.any():
        raise ValueError("region contains no grid nodes")
    return float(field.values[m].mean())


# --------------------------------------------------------------------------
# binary cache

class FieldCache:
    """``.npz`` store keyed by model hash, grid, noise and ``b1``."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(model_hash: str, grid: Grid, sigma: Sequence[float], b1: float, kind: str,
            extra: Optional[dict] = None) -> str:
        payload = {"model": model_hash, "grid": grid.key(), "sigma": [float(s) for s in sigma],
                   "b1": float(b1), "kind": kind, "extra": extra or {}}
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:24]

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.npz"

    def load(self, key: str, grid: Grid) -> Optional[ScalarField]:
        p = self.path(key)
        if not p.exists():
            return None
        with np.load(p) as data:
            return ScalarField(grid, data["values"])

    def save(self, key: str, field_: ScalarField) -> None:
        tmp = self.path(key).with_suffix(".tmp.npz")
        np.savez_compressed(tmp, values=field_.values)
        tmp.replace(self.path(key))
