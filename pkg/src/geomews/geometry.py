"""Level curves of committor fields and the geometric width indicator.

The separatrix is the ``q = 1/2`` contour. The local width of the
transition band ``1/2 - alpha <= q <= 1/2 + alpha`` is, to first order,
``w = 2 alpha / |grad q|``; EWS_geom is its arc-length average along the
separatrix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator
from scipy.optimize import bisect

from .pde import ScalarField, write_header

GRAD_FLOOR = 1e-6
EDGE_MARGIN = (0.006, 0.0026)


class Polyline:
    """Ordered vertices with cumulative arc length."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2:
            raise ValueError("vertices must be a 2D array")
        if len(v) > 1:
            keep = np.r_[True, np.any(np.diff(v, axis=0) != 0, axis=1)]
            v = v[keep]
        if len(v) < 2:
            raise ValueError("degenerate polyline: fewer than two distinct vertices")
        self.vertices = v
        self.vertices.setflags(write=False)
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        self.arc = np.r_[0.0, np.cumsum(seg)]

    def __len__(self):
        return len(self.vertices)

    @property
    def length(self) -> float:
        return float(self.arc[-1])

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.arc)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[1:] + self.vertices[:-1])

    def reversed(self) -> "Polyline":
        return Polyline(self.vertices[::-1])

    def refined(self) -> "Polyline":
        """Insert the midpoint of every segment (linear interpolation)."""
        v = self.vertices
        out = np.empty((2 * len(v) - 1, v.shape[1]))
        out[0::2] = v
        out[1::2] = self.midpoints
        return Polyline(out)

    def to_csv(self, path, b1: float = np.nan, sigma: float = np.nan,
               header: Optional[dict] = None) -> None:
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(["b1", "sigma", "T", "u", "s"])
            for (t, u), s in zip(self.vertices, self.arc):
                w.writerow([b1, sigma, repr(float(t)), repr(float(u)), repr(float(s))])

    @classmethod
    def from_csv(cls, path) -> "Polyline":
        with open(path) as fh:
            rows = [line for line in fh if not line.startswith("#")]
        data = np.genfromtxt(rows, delimiter=",", names=True)
        return cls(np.c_[data["T"], data["u"]])


# --------------------------------------------------------------------------
# marching squares

# corner bits: 1 = (i, j), 2 = (i+1, j), 4 = (i+1, j+1), 8 = (i, j+1)
# edges: 0 bottom (i,j)-(i+1,j), 1 right (i+1,j)-(i+1,j+1),
#        2 top (i,j+1)-(i+1,j+1), 3 left (i,j)-(i,j+1)
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)],
    7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)], 11: [(2, 1)], 12: [(1, 3)],
    13: [(1, 0)], 14: [(0, 3)],
}


def _edge_key(i, j, e):
    if e == 0:
        return ("h", i, j)
    if e == 2:
        return ("h", i, j + 1)
    if e == 3:
        return ("v", i, j)
    return ("v", i + 1, j)


def _contour_segments(values, level):
    """Marching-squares segments as pairs of edge keys."""
    above = values >= level
    code = (above[:-1, :-1] * 1 + above[1:, :-1] * 2 + above[1:, 1:] * 4 + above[:-1, 1:] * 8)
    segments = []
    for i, j in np.argwhere((code != 0) & (code != 15)):
        c = int(code[i, j])
        if c in (5, 10):
            centre = 0.25 * (values[i, j] + values[i + 1, j] + values[i + 1, j + 1]
                             + values[i, j + 1])
            centre_above = centre >= level
            if c == 5:
                pairs = [(3, 2), (1, 0)] if centre_above else [(3, 0), (1, 2)]
            else:
                pairs = [(0, 3), (2, 1)] if centre_above else [(0, 1), (2, 3)]
        else:
            pairs = _CASES[c]
        for a, b in pairs:
            segments.append((_edge_key(i, j, a), _edge_key(i, j, b)))
    return segments


def _crossing(key, values, axes, level):
    kind, i, j = key
    if kind == "h":
        va, vb = values[i, j], values[i + 1, j]
        t = (level - va) / (vb - va)
        return np.array([axes[0][i] + t * (axes[0][i + 1] - axes[0][i]), axes[1][j]])
    va, vb = values[i, j], values[i, j + 1]
    t = (level - va) / (vb - va)
    return np.array([axes[0][i], axes[1][j] + t * (axes[1][j + 1] - axes[1][j])])


def _chain(segments):
    """Join segments sharing edge keys into ordered key sequences."""
    nbrs = {}
    for a, b in segments:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    seen = set()
    chains = []
    # start from open ends first so open curves come out whole
    starts = [k for k, v in nbrs.items() if len(v) == 1] + list(nbrs)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        prev, cur = None, s
        while True:
            nxt = [k for k in nbrs[cur] if k != prev and k not in seen]
            if not nxt:
                if len(chain) > 2 and s in nbrs[cur] and prev is not None:
                    chain.append(s)  # closed loop
                break
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)
        chains.append(chain)
    return chains


def contour_lines(field: ScalarField, level: float) -> list:
    """All connected pieces of ``{q = level}`` as vertex arrays."""
    values = field.values
    if field.grid.dim != 2:
        raise ValueError("contour extraction needs a 2D field")
    if not values.min() < level < values.max():
        raise ValueError("level not attained")
    axes = field.grid.axes
    chains = _chain(_contour_segments(values, level))
    return [np.array([_crossing(k, values, axes, level) for k in c]) for c in chains]


def extract_separatrix(field: ScalarField, level: float = 0.5,
                       margin=EDGE_MARGIN) -> Polyline:
    """Longest connected piece of the ``level`` contour away from the box edges."""
    lo = np.asarray(field.grid.lower)
    hi = np.asarray(field.grid.upper)
    margin = np.asarray(margin, dtype=float)
    best = None
    for line in contour_lines(field, level):
        ok = np.all((line >= lo + margin) & (line <= hi - margin), axis=1)
        d = np.diff(np.r_[0, ok.astype(int), 0])
        for a, b in zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)):
            piece = line[a:b]
            if len(piece) < 2:
                continue
            length = np.linalg.norm(np.diff(piece, axis=0), axis=1).sum()
            if best is None or length > best[0]:
                best = (length, piece)
    if best is None:
        raise ValueError("all contour branches removed by the edge filter")
    return Polyline(best[1])


# --------------------------------------------------------------------------
# widths

def _gradient(field: ScalarField):
    return np.gradient(field.values, *field.grid.spacing)


def _interp(field: ScalarField, arr):
    return RegularGridInterpolator(field.grid.axes, arr, method="linear",
                                   bounds_error=False, fill_value=None)


def ews_geom(field: ScalarField, gamma: Optional[Polyline] = None, alpha: float = 0.1) -> float:
    """Arc-length mean of ``2 alpha / max(|grad q|, 1e-6)`` along ``gamma``.

    For a 1D field the separatrix is the single ``q = 1/2`` crossing and the
    result is the local width there.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    if field.grid.dim == 1:
        return 2 * alpha / max(_gradient_at_half_1d(field), GRAD_FLOOR)
    if gamma is None:
        gamma = extract_separatrix(field)
    if gamma.length <= 0:
        raise ValueError("degenerate polyline")
    gT, gu = _gradient(field)
    mid = gamma.midpoints
    norm = np.hypot(_interp(field, gT)(mid), _interp(field, gu)(mid))
    w = 2 * alpha / np.maximum(norm, GRAD_FLOOR)
    return float(np.sum(w * gamma.segment_lengths) / gamma.length)


def _gradient_at_half_1d(field: ScalarField, level: float = 0.5) -> float:
    q = field.values
    x = field.grid.axes[0]
    g = np.gradient(q, x[1] - x[0])
    cross = np.flatnonzero(np.diff(np.sign(q - level)))
    if cross.size == 0:
        raise ValueError("level not attained")
    i = cross[0]
    t = (level - q[i]) / (q[i + 1] - q[i])
    return float(abs(g[i] + t * (g[i + 1] - g[i])))


def local_widths(field: ScalarField, gamma: Polyline, alpha: float = 0.1) -> np.ndarray:
    gT, gu = _gradient(field)
    v = gamma.vertices
    norm = np.hypot(_interp(field, gT)(v), _interp(field, gu)(v))
    return 2 * alpha / np.maximum(norm, GRAD_FLOOR)


def _point_segment_distance(p, a, b):
    """Distances from points ``p`` (M, 2) to segments ``a -> b`` (N, 2); shape (M, N)."""
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    ap = p[:, None, :] - a[None, :, :]
    t = np.einsum("mnk,nk->mn", ap, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - proj, axis=2)


def curve_distance(source: Polyline, target: Polyline) -> float:
    """Arc-length weighted mean of the distance from ``source`` to ``target``.

    Directed: each ``source`` vertex is weighted by half the length of its
    adjacent segments and measured to the nearest point on ``target``.
    """
    a, b = target.vertices[:-1], target.vertices[1:]
    d = np.empty(len(source))
    step = 2048
    for k in range(0, len(source), step):
        d[k:k + step] = _point_segment_distance(source.vertices[k:k + step], a, b).min(axis=1)
    seg = source.segment_lengths
    w = np.r_[seg, 0.0] + np.r_[0.0, seg]
    return float(np.sum(w * d) / np.sum(w))


@dataclass(frozen=True)
class WidthProfile:
    vertices: np.ndarray
    w_alpha: np.ndarray
    grad_norm: np.ndarray
    kappa2: np.ndarray
    xi_plus_pred: np.ndarray
    xi_minus_pred: np.ndarray
    xi_plus: np.ndarray
    xi_minus: np.ndarray
    valid: np.ndarray

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        cols = ["T", "u", "w_alpha", "grad_norm", "kappa2", "xi_plus_pred", "xi_minus_pred",
                "xi_plus", "xi_minus", "valid"]
        with open(path, "w", newline="") as fh:
            write_header(fh, header)
            w = csv.writer(fh)
            w.writerow(cols)
            for k in range(len(self.vertices)):
                w.writerow([*self.vertices[k], self.w_alpha[k], self.grad_norm[k], self.kappa2[k],
                            self.xi_plus_pred[k], self.xi_minus_pred[k], self.xi_plus[k],
                            self.xi_minus[k], int(self.valid[k])])


def width_asymmetry(field: ScalarField, gamma: Polyline, alpha: float = 0.1) -> WidthProfile:
    """Second-order half-widths of the transition band at each vertex.

    ``kappa1 = |grad q|`` and ``kappa2 = n^T H n`` with ``n`` the unit normal
    give the predicted half-widths ``alpha/kappa1 -/+ kappa2 alpha^2 / (2 kappa1^3)``.
    The measured half-widths solve ``q(x +/- xi n) = 1/2 +/- alpha`` by
    bisection on a bicubic spline of ``q``.
    """
    if not 0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    hT, hu = field.grid.spacing
    gT, gu = _gradient(field)
    gTT, gTu = np.gradient(gT, hT, hu)
    _, guu = np.gradient(gu, hT, hu)
    v = gamma.vertices
    g = np.stack([_interp(field, gT)(v), _interp(field, gu)(v)], axis=1)
    k1 = np.maximum(np.linalg.norm(g, axis=1), GRAD_FLOOR)
    n = g / k1[:, None]
    hTT, hTu, huu = (_interp(field, a)(v) for a in (gTT, gTu, guu))
    k2 = n[:, 0] ** 2 * hTT + 2 * n[:, 0] * n[:, 1] * hTu + n[:, 1] ** 2 * huu
    xp_pred = alpha / k1 - k2 * alpha**2 / (2 * k1**3)
    xm_pred = alpha / k1 + k2 * alpha**2 / (2 * k1**3)

    axes = field.grid.axes
    spline = RectBivariateSpline(axes[0], axes[1], field.values, kx=3, ky=3, s=0)
    lo = np.asarray(field.grid.lower)
    hi = np.asarray(field.grid.upper)
    ds = 0.25 * min(hT, hu)
    xp = np.full(len(v), np.nan)
    xm = np.full(len(v), np.nan)
    for k in range(len(v)):
        xp[k] = _ray_root(spline, v[k], n[k], 0.5 + alpha, ds, lo, hi)
        xm[k] = _ray_root(spline, v[k], -n[k], 0.5 - alpha, ds, lo, hi)
    valid = np.isfinite(xp) & np.isfinite(xm)
    return WidthProfile(v, 2 * alpha / k1, k1, k2, xp_pred, xm_pred, xp, xm, valid)


def _ray_root(spline, x0, direction, target, ds, lo, hi, max_steps=100000):
    """Distance along ``direction`` where the spline first reaches ``target``."""
    def f(s):
        p = x0 + s * direction
        return float(spline(p[0], p[1], grid=False)) - target

    f0 = f(0.0)
    s = 0.0
    for _ in range(max_steps):
        s_next = s + ds
        p = x0 + s_next * direction
        if np.any(p < lo) or np.any(p > hi):
            return np.nan
        f1 = f(s_next)
        if f0 == 0:
            return s
        if np.sign(f1) != np.sign(f0):
            return bisect(f, s, s_next, xtol=1e-14, maxiter=200)
        s, f0 = s_next, f1
    return np.nan
