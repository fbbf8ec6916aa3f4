"""Optional SVG figures drawn from in-memory results (needs matplotlib)."""
from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "geomews"  # stable element ids
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()


def bifurcation(curve, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, s in enumerate(curve.sigmas):
        ax.plot(curve.b1, curve.ubar[k], label=f"σ={s:g}")
        ax.fill_between(curve.b1, curve.q10[k], curve.q90[k], alpha=0.2)
    for j, b in enumerate(curve.b1):
        for u, st in curve.branches[j]:
            ax.plot(b, u, ".", ms=1.5, color="k" if st == "stable" else "r")
    ax.set_xlabel("b1")
    ax.set_ylabel("u")
    ax.legend()
    _save(fig, path)


def marginals(hists, path):
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    for label, (mt, mu) in hists.items():
        axes[0].plot(mt.centers, mt.mass, label=label)
        axes[1].plot(mu.centers, mu.mass, label=label)
    axes[0].set_xlabel("T")
    axes[1].set_xlabel("u")
    axes[0].legend()
    _save(fig, path)


def separatrices(curves, deterministic, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, c in curves.items():
        ax.plot(c.vertices[:, 0], c.vertices[:, 1], label=label)
    if deterministic is not None:
        ax.plot(deterministic.vertices[:, 0], deterministic.vertices[:, 1], "k-", lw=2,
                label="deterministic")
    ax.set_xlabel("T")
    ax.set_ylabel("u")
    ax.legend()
    _save(fig, path)


def indicator_curves(series, path):
    """``series`` maps a label to ``(b1, values)``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label)
    ax.set_xlabel("b1")
    ax.legend()
    _save(fig, path)


def scaling(sigma, log_tau, ews, report, path):
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    x = 1 / np.asarray(ews) ** 2
    axes[0].plot(x, log_tau, "o")
    axes[0].plot(x, report.c1 + report.c2_fit * x, "-")
    axes[0].set_xlabel("1 / EWS_geom^2")
    axes[0].set_ylabel("log tau")
    axes[1].plot(sigma, np.asarray(ews) / np.asarray(sigma), "o-")
    axes[1].set_xlabel("sigma")
    axes[1].set_ylabel("EWS_geom / sigma")
    _save(fig, path)
