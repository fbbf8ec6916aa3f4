"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 no transitions observed in Monte Carlo. Failures print a one-line JSON
error record on stderr and also write ``error.json`` to the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, analysis, indicators, model, plots
from .config import ConfigError, config_hash, expand, load_config, model_params
from .geometry import width_asymmetry
from .pde import EllipseRegion, FieldCache, write_header
from .simulate import NoTransitionsError, SimConfig, histograms_to_csv, mc_mfpt, \
    stationary_histogram
from .stationary import bifurcation_curve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NO_TRANSITIONS = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class Run:
    """Resolved configuration plus output helpers for one command."""

    def __init__(self, cfg: dict, command: str, jobs: int = 1):
        self.cfg = cfg
        self.command = command
        self.jobs = jobs
        self.seed = int(cfg["seed"])
        self.out = Path(cfg["output"]["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        cache = cfg["output"]["cache"]
        self.cache = FieldCache(cache) if cache else None
        self.svg = bool(cfg["output"]["svg"])
        self.params = model_params(cfg)
        g = cfg["grid"]
        self.setup = analysis.FdmSetup(
            n=int(g["n"]), lower=tuple(map(float, g["lower"])), upper=tuple(map(float, g["upper"])),
            semi_axes=tuple(map(float, cfg["regions"]["semi_axes"])),
            alpha=float(cfg["analysis"]["alpha"]), upwind=bool(g["upwind"]))
        self.written = []

    @property
    def header(self) -> dict:
        return {"tool": "geomews", "version": __version__, "command": self.command,
                "config_hash": config_hash(self.cfg), "seed": self.seed}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.written.append(str(p))
        return p

    def write_json(self, name: str, payload: dict) -> None:
        with open(self.path(name), "w") as fh:
            json.dump({"header": self.header, **payload}, fh, indent=2, sort_keys=True,
                      default=_jsonable)
            fh.write("\n")

    def write_rows(self, name: str, columns, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            write_header(fh, self.header)
            w = csv.writer(fh)
            w.writerow(columns)
            w.writerows(rows)

    def plot(self, fn, name: str, *args) -> None:
        if not self.svg:
            return
        try:
            fn(*args, self.path(name))
        except ImportError:
            warnings.warn("matplotlib not installed; skipping SVG output", RuntimeWarning)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def _finite(v):
    return None if v is None or not np.isfinite(v) else float(v)


# --------------------------------------------------------------------------
# commands

def cmd_equilibria(run: Run, args) -> dict:
    b1s = args.b1 or [run.params.b1]
    rows = []
    out = []
    for b1 in b1s:
        eqs = model.find_equilibria(run.params.replace(b1=b1), search_box=model.WIDE_BOX)
        for e in eqs:
            re = np.sort(np.real(e.eigenvalues))
            rows.append([b1, repr(float(e.state[0])), repr(float(e.state[1])), e.stability,
                         repr(float(re[0])), repr(float(re[1]))])
            out.append({"b1": b1, "T": e.state[0], "u": e.state[1], "stability": e.stability})
    run.write_rows("equilibria.csv", ["b1", "T", "u", "stability", "eig1_re", "eig2_re"], rows)
    result = {"equilibria": out}
    if args.window:
        lo, hi = model.bistable_window(run.params)
        result["bistable_window"] = [lo, hi]
        print(f"bistable window: [{lo:.6f}, {hi:.6f}]")
    run.write_json("equilibria.json", result)
    for r in out:
        print(f"b1={r['b1']:.4f}  T={r['T']:.6f}  u={r['u']:.6f}  {r['stability']}")
    return result


def cmd_bifurcation(run: Run, args) -> dict:
    c = run.cfg["bifurcation"]
    curve = bifurcation_curve(run.params, expand(c["b1"], "bifurcation.b1"),
                              expand(c["sigma"], "bifurcation.sigma"),
                              u_max=float(c["u_max"]), n=int(c["n"]))
    curve.to_csv(run.path("bifurcation.csv"), run.header)
    curve.branches_to_csv(run.path("branches.csv"), run.header)
    run.plot(plots.bifurcation, "bifurcation.svg", curve)
    return {"points": int(curve.ubar.size)}


def cmd_marginals(run: Run, args) -> dict:
    c = run.cfg["marginals"]
    sigma = float(c["sigma"])
    sim = SimConfig(dt=float(run.cfg["mc"]["dt"]), t_max=float(c["t_max"]), seed=run.seed)
    hists = {}
    for k, b1 in enumerate(expand(c["b1"], "marginals.b1")):
        p = run.params.replace(b1=b1).with_noise(sigma)
        system = model.phyto_system(p, run.setup.lower, run.setup.upper)
        x0 = model.find_equilibria(p).background.state
        m = stationary_histogram(system, sim, float(c["burn_in"]), int(c["bins"]), x0=x0,
                                 stream=k)
        histograms_to_csv(run.path(f"marginals_b1={b1:g}.csv"), m, run.header)
        hists[f"b1={b1:g}"] = m
    run.plot(plots.marginals, "marginals.svg", hists)
    return {"b1": list(hists)}


def cmd_separatrix(run: Run, args) -> dict:
    b1s = args.b1 or [run.params.b1]
    sigmas = args.sigma or [0.005, 0.01, 0.02]
    summary = []
    for b1 in b1s:
        p = run.params.replace(b1=b1)
        det = model.deterministic_separatrix(p, run.setup.lower, run.setup.upper)
        det.to_csv(run.path(f"separatrix_det_b1={b1:g}.csv"), b1=b1, header=run.header)
        curves = {}
        for s in sigmas:
            r = analysis.fdm_point(p, s, run.setup, run.cache, want_tau=False)
            tag = f"b1={b1:g}_sigma={s:g}"
            r.committor.to_csv(run.path(f"committor_{tag}.csv"), run.header)
            r.separatrix.to_csv(run.path(f"separatrix_{tag}.csv"), b1=b1, sigma=s,
                                header=run.header)
            width_asymmetry(r.committor, r.separatrix, run.setup.alpha).to_csv(
                run.path(f"widths_{tag}.csv"), run.header)
            curves[f"σ={s:g}"] = r.separatrix
            summary.append({"b1": b1, "sigma": s, "ews_geom": r.ews,
                            "vertices": len(r.separatrix),
                            "mdb": analysis.curve_distance(r.separatrix, det)})
        run.plot(plots.separatrices, f"separatrix_b1={b1:g}.svg", curves, det)
    run.write_json("separatrix.json", {"curves": summary})
    return {"curves": summary}


def _breakpoint(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.isfinite(y).sum() < 6:
        return {"breakpoint": None, "interval": None, "reason": "fewer than 6 non-gap points"}
    h = analysis.hinge_fit_bic(x, y)
    return {"breakpoint": h.breakpoint, "interval": list(h.interval),
            "left_slope": h.left_slope, "right_slope": h.right_slope}


def cmd_indicators(run: Run, args) -> dict:
    a = run.cfg["analysis"]
    b1s = expand(a["indicator_b1"], "analysis.indicator_b1")
    sigmas = expand(a["indicator_sigma"], "analysis.indicator_sigma")
    records = analysis.indicator_scan(run.params, b1s, sigmas, run.setup,
                                      sigma_ref=float(a["sigma_ref"]), cache=run.cache)
    classic = args.classic or bool(a["classic"])
    if classic:
        t = run.cfg["timeseries"]
        proto = indicators.Protocol(float(t["t_sim"]), float(t["t_tr"]), float(t["dt"]),
                                    float(t["dt_obs"]), int(t["n_ens"]), run.seed)
        res = indicators.classic_ews_scan(run.params, b1s, sigmas, proto,
                                          semi_axes=run.setup.semi_axes)
        res.to_csv(run.path("indicators_classic.csv"), run.header)
        lookup = {(p.b1, p.sigma): p for p in res.points}
        for r in records:
            pt = lookup.get((r.b1, r.sigma))
            if pt is not None and not pt.gap:
                r.var, r.ac1 = pt.log10_var, pt.ac1
            elif pt is not None:
                r.flags = (r.flags + ";" if r.flags else "") + "classic-gap"
    analysis.records_to_csv(run.path("indicators.csv"), records, run.header)
    breaks = {}
    series = {}
    for s in sigmas:
        rs = [r for r in records if r.sigma == s]
        x = [r.b1 for r in rs]
        entry = {"ews_geom": _breakpoint(x, [r.ews_geom for r in rs])}
        series[f"EWS σ={s:g}"] = (x, _safe_normalize([r.ews_geom for r in rs]))
        if classic:
            entry["log10_var"] = _breakpoint(x, [r.var for r in rs])
            entry["ac1"] = _breakpoint(x, [r.ac1 for r in rs])
            entry["n_gaps"] = int(sum(not np.isfinite(r.var) for r in rs))
        breaks[f"{s:g}"] = entry
    run.write_json("breakpoints.json", {"breakpoints": breaks})
    run.plot(plots.indicator_curves, "indicators.svg", series)
    return {"breakpoints": breaks}


def _safe_normalize(v):
    try:
        return indicators.normalize_scores(v)
    except ValueError:
        return np.full(len(v), np.nan)


def cmd_scaling(run: Run, args) -> dict:
    b1 = args.b1 if args.b1 is not None else run.params.b1
    p = run.params.replace(b1=b1)
    sigmas = expand(run.cfg["sweep"]["sigma"], "sweep.sigma")
    results = analysis.sigma_sweep(p, sigmas, run.setup, run.cache)
    report = analysis.sweep_report(results)
    mc = run.cfg["mc"]
    n_traj = int(args.n_traj if args.n_traj is not None else mc["n_traj"])
    mc_sigmas = expand(mc["sigma"], "mc.sigma") if mc.get("sigma") else sigmas
    records = []
    for k, r in enumerate(results):
        rec = analysis.SweepRecord(b1, r.sigma, ews_geom=r.ews, log_tau_fdm=r.log_tau)
        if n_traj > 0 and any(math.isclose(r.sigma, s) for s in mc_sigmas):
            ps = p.with_noise(r.sigma)
            eqs = model.find_equilibria(ps)
            sim = SimConfig(dt=float(mc["dt"]), t_max=float(mc["t_max"]), seed=run.seed,
                            n_traj=n_traj, jobs=run.jobs)
            est = mc_mfpt(model.phyto_system(ps, run.setup.lower, run.setup.upper),
                          EllipseRegion(eqs.background.state, run.setup.semi_axes),
                          EllipseRegion(eqs.bloom.state, run.setup.semi_axes), sim,
                          first_index=k * n_traj)
            rec.log_tau_mc = math.log(est.mean)
            rec.mc_se = est.std_error
            rec.flags = f"censored={est.censored_fraction:.6f}"
            est.to_csv(run.path(f"passage_times_sigma={r.sigma:g}.csv"), run.header)
        records.append(rec)
    analysis.records_to_csv(run.path("scaling_sweep.csv"), records, run.header)
    run.write_json("scaling.json", {"b1": b1, "report": report.to_dict()})
    s = np.array([r.sigma for r in results])
    run.plot(plots.scaling, "scaling.svg", s, [r.log_tau for r in results],
             [r.ews for r in results], report)
    print(json.dumps(report.to_dict(), indent=2, default=_jsonable))
    return report.to_dict()


def cmd_robustness(run: Run, args) -> dict:
    b1 = args.b1 if args.b1 is not None else run.params.b1
    sigmas = expand(run.cfg["sweep"]["sigma"], "sweep.sigma")
    ref, rows = analysis.robustness_suite(run.params.replace(b1=b1), sigmas, run.setup,
                                          run.cache)
    analysis.robustness_to_csv(run.path("robustness.csv"), rows, run.header)
    run.write_json("robustness.json", {
        "b1": b1, "base": ref.to_dict(),
        "rows": [{"variation": r.variation, "c2_fit": _finite(r.c2_fit),
                  "slope_change_pct": _finite(r.slope_change_pct), "r2": _finite(r.r2),
                  "error": r.error} for r in rows]})
    for r in rows:
        print(f"{r.variation:32s} {r.slope_change_pct:+8.2f}%  R2={r.r2:.4f} {r.error}")
    return {"rows": len(rows)}


def cmd_schlogl(run: Run, args) -> dict:
    c = run.cfg["schlogl"]
    sigmas = np.array(expand(run.cfg["sweep"]["sigma"], "sweep.sigma"))
    lt, ew = analysis.schlogl_sweep(sigmas, tuple(map(float, c["roots"])), int(c["n"]),
                                    float(c["radius"]), float(run.cfg["analysis"]["alpha"]))
    rep = analysis.scaling_pipeline(sigmas, lt, ew)
    fi = analysis.linear_fit(1 / sigmas**2, lt)
    payload = {
        "log_tau_vs_inv_sigma2": {"intercept": fi.intercept, "slope": fi.slope,
                                  "r2": fi.r_squared},
        "ews_vs_sigma": {"slope": rep.K, "r2": rep.r2_ii},
        "log_tau_vs_inv_ews2": {"intercept": rep.c1, "slope": rep.c2_fit, "r2": rep.r2_iii},
        "c2_pred": rep.c2_pred, "rel_err": rep.rel_err,
    }
    run.write_rows("schlogl.csv", ["sigma", "log_tau", "ews_geom"],
                   [[repr(float(s)), repr(float(a)), repr(float(b))]
                    for s, a, b in zip(sigmas, lt, ew)])
    run.write_json("schlogl.json", payload)
    print(json.dumps(payload, indent=2))
    return payload


COMMANDS = {
    "equilibria": (cmd_equilibria, "equilibria and their stability"),
    "bifurcation": (cmd_bifurcation, "expectation-based bifurcation diagram"),
    "marginals": (cmd_marginals, "stationary marginal histograms"),
    "separatrix": (cmd_separatrix, "committor fields, separatrices and width profiles"),
    "indicators": (cmd_indicators, "EWS_geom, MDB, MDS (and variance/AC1) over b1"),
    "scaling": (cmd_scaling, "noise sweep, scaling-law report, Monte Carlo check"),
    "robustness": (cmd_robustness, "scaling law under numerical and modelling variations"),
    "schlogl": (cmd_schlogl, "one-dimensional benchmark end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="geomews", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"geomews {__version__}")
    ap.add_argument("-c", "--config", help="YAML run configuration")
    ap.add_argument("-o", "--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="master seed (overrides seed)")
    ap.add_argument("--jobs", type=int, default=1, help="worker threads for Monte Carlo")
    ap.add_argument("--svg", action="store_true", help="also write SVG figures")
    ap.add_argument("--cache", help="field cache directory (overrides output.cache)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        if name in ("equilibria", "separatrix"):
            sp.add_argument("--b1", type=float, nargs="+")
        if name in ("scaling", "robustness"):
            sp.add_argument("--b1", type=float)
        if name == "equilibria":
            sp.add_argument("--window", action="store_true", help="also locate the bistable window")
        if name == "separatrix":
            sp.add_argument("--sigma", type=float, nargs="+")
        if name == "indicators":
            sp.add_argument("--classic", action="store_true")
        if name == "scaling":
            sp.add_argument("--n-traj", type=int, dest="n_traj")
    return ap


def _error_record(code: int, kind: str, message: str, out: Path | None) -> None:
    rec = {"error": kind, "exit_code": code, "message": message}
    print(json.dumps(rec), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, indent=2) + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    out = None
    try:
        args = build_parser().parse_args(argv)
        overrides = {}
        if args.out:
            out = Path(args.out)
            overrides.setdefault("output", {})["dir"] = args.out
        if args.cache:
            overrides.setdefault("output", {})["cache"] = args.cache
        if args.svg:
            overrides.setdefault("output", {})["svg"] = True
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config, overrides)
        out = Path(cfg["output"]["dir"])
        try:
            run = Run(cfg, args.command, args.jobs)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
        COMMANDS[args.command][0](run, args)
        return EXIT_OK
    except ConfigError as exc:
        _error_record(EXIT_CONFIG, "config", str(exc), out)
        return EXIT_CONFIG
    except NoTransitionsError as exc:
        _error_record(EXIT_NO_TRANSITIONS, "no-transitions", str(exc), out)
        return EXIT_NO_TRANSITIONS
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        _error_record(EXIT_NUMERIC, "numerical", f"{type(exc).__name__}: {exc}", out)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
