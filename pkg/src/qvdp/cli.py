"""Command-line front end: sweeps of the quantum, classical and noisy-classical models.

Every run writes plot-ready CSV files plus ``manifest.json`` into the output
directory.  The manifest holds the fully resolved configuration, so

    qvdp --config OUT/manifest.json --out OTHER

reproduces the CSVs byte for byte.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classical import BIFURCATION_COLUMNS, DivergenceError, SingularBranchError, bifurcation_diagram
from .fock import TruncationWarning
from .liouvillian import (
    DEFAULT_LEVELS, DEFAULT_TOL, ConvergenceError, IntegrationError, MemoryBudgetError, map_points,
)
from .outputs import write_manifest, write_table
from .params import ModelParams
from .semiclassical import (
    NegativeDiffusionError,
    SDEConfig,
    averaged_amplitude,
    classify_ensemble,
    run_ensemble,
    trajectory_extrema,
)
from .wigner import DEFAULT_PROMINENCE, PhaseGrid, QuantumPointTask

log = logging.getLogger("qvdp")

MODELS = ("quantum", "classical", "sde", "compare")
# 25 couplings, denser near the Hopf (eps = k1) and pitchfork (eps = w^2/(w + k1)) points
DEFAULT_EPS = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2,
    1.25, 1.3, 1.35, 1.4, 1.5, 1.6, 1.7, 1.8, 1.85, 1.9, 1.95, 1.99,
]
NUMERICAL_ERRORS = (
    IntegrationError, ConvergenceError, MemoryBudgetError, DivergenceError,
    NegativeDiffusionError, SingularBranchError, ArithmeticError,
)
# quantum label -> noisy-classical label
LABEL_MAP = {"Osc": "Osc", "QAD": "AD", "QOD": "OD"}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "quantum"
    params: ModelParams = ModelParams()
    eps_grid: list = field(default_factory=lambda: list(DEFAULT_EPS))
    fock_dim: int = DEFAULT_LEVELS
    auto_raise: bool = True
    tol: float = DEFAULT_TOL
    grid: PhaseGrid = PhaseGrid()
    prominence: float = DEFAULT_PROMINENCE
    sde: SDEConfig = SDEConfig()
    classical_dt: float = 1e-3
    classical_t_final: float = 500.0
    out_dir: str = ""
    seed: int = SDEConfig.seed
    jobs: int = 1
    wigner: bool = False
    dump_samples: bool = False
    gnuplot: bool = False

    def eps_values(self) -> list[float]:
        g = self.eps_grid
        if isinstance(g, dict):
            vals = np.linspace(float(g["start"]), float(g["stop"]), int(g["count"])).tolist()
        else:
            vals = [float(v) for v in g]
        if not vals:
            raise UsageError("empty eps grid")
        if min(vals) < 0:
            raise UsageError("eps values must be nonnegative")
        return [round(v, 12) for v in vals]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["params"] = {k: v for k, v in self.params.as_dict().items() if k != "eps"}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d.get("config", d))  # accept a manifest directly
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if f.name == "params":
                v = ModelParams(**{k: float(x) for k, x in v.items() if k != "eps"})
            elif f.name == "grid":
                v = parse_grid(v) if isinstance(v, str) else PhaseGrid(**v)
            elif f.name == "sde":
                v = SDEConfig(**v)
            kw[f.name] = v
        return cls(**kw)


def parse_grid(text: str) -> PhaseGrid:
    try:
        lo, hi, n = text.split(":")
        return PhaseGrid(float(lo), float(hi), float(lo), float(hi), int(n), int(n))
    except ValueError as exc:
        raise UsageError(f"bad --grid {text!r}: expected xmin:xmax:n ({exc})") from None


def parse_eps_range(text: str) -> dict:
    try:
        start, stop, count = text.split(":")
        return {"start": float(start), "stop": float(stop), "count": int(count)}
    except ValueError:
        raise UsageError(f"bad --eps-range {text!r}: expected start:stop:count") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qvdp",
        description="Coupled quantum van der Pol oscillators: amplitude death to oscillation death.",
    )
    ap.add_argument("--model", choices=MODELS, help="which model to sweep (default quantum)")
    ap.add_argument("--config", help="JSON run configuration or a previous manifest.json")
    ap.add_argument("--omega", type=float)
    ap.add_argument("--k1", type=float)
    ap.add_argument("--k2", type=float)
    eps = ap.add_mutually_exclusive_group()
    eps.add_argument("--eps", type=float, nargs="+", help="explicit coupling values")
    eps.add_argument("--eps-range", help="start:stop:count (inclusive linspace)")
    ap.add_argument("--fock-dim", type=int, help=f"Fock levels per mode (default {DEFAULT_LEVELS})")
    ap.add_argument("--no-auto-raise", action="store_true", help="keep --fock-dim even if the top level is populated")
    ap.add_argument("--grid", help="phase-space grid xmin:xmax:n, same on both axes")
    ap.add_argument("--tol", type=float, help="steady-state residual tolerance")
    ap.add_argument("--prominence", type=float, help="relative prominence for maxima detection")
    ap.add_argument("--dt", type=float, help="time step of the classical/SDE integrators")
    ap.add_argument("--t-final", type=float, help="integration horizon of the classical/SDE integrators")
    ap.add_argument("--runs", type=int, help="number of SDE trajectories")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, help="parallel worker processes")
    ap.add_argument("--out", help="output directory (default $QVDP_OUT_DIR or ./qvdp_out)")
    ap.add_argument("--wigner", action="store_true", help="write the Wigner grid and marginals at every eps")
    ap.add_argument("--dump-samples", action="store_true", help="write pooled steady-window SDE samples")
    ap.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script stub")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        try:
            cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    else:
        cfg = RunConfig()
    if args.model:
        cfg.model = args.model
    p = {k: getattr(args, k) for k in ("omega", "k1", "k2") if getattr(args, k) is not None}
    if p:
        cfg.params = dataclasses.replace(cfg.params, **p)
    if args.eps is not None:
        cfg.eps_grid = list(args.eps)
    elif args.eps_range:
        cfg.eps_grid = parse_eps_range(args.eps_range)
    if args.fock_dim is not None:
        if args.fock_dim < 2:
            raise UsageError("--fock-dim must be >= 2")
        cfg.fock_dim = args.fock_dim
    if args.no_auto_raise:
        cfg.auto_raise = False
    if args.grid:
        cfg.grid = parse_grid(args.grid)
    for name in ("tol", "prominence", "jobs"):
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if args.seed is not None:
        cfg.seed = args.seed
    sde = {"seed": cfg.seed}
    if args.dt is not None:
        sde["dt"] = cfg.classical_dt = args.dt
    if args.t_final is not None:
        sde["t_final"] = cfg.classical_t_final = args.t_final
    if args.runs is not None:
        sde["n_trajectories"] = args.runs
    cfg.sde = dataclasses.replace(cfg.sde, **sde)
    cfg.wigner = cfg.wigner or args.wigner
    cfg.dump_samples = cfg.dump_samples or args.dump_samples
    cfg.gnuplot = cfg.gnuplot or args.gnuplot
    cfg.out_dir = args.out or cfg.out_dir or os.environ.get("QVDP_OUT_DIR", "qvdp_out")
    cfg.eps_values()  # validate early
    return cfg


def _eps_tag(e: float) -> str:
    return f"{e:.6g}".replace("-", "m")


def run_quantum(cfg: RunConfig, out: Path, report: dict) -> list[Path]:
    task = QuantumPointTask(cfg.fock_dim, cfg.grid, cfg.prominence, cfg.tol, cfg.auto_raise, keep_wigner=cfg.wigner)
    params = [cfg.params.with_eps(e) for e in cfg.eps_values()]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        rows = map_points(task, params, cfg.jobs)
    report["warnings"] += [str(w.message) for w in caught]
    report["residuals"] = {str(r["eps"]): r["residual"] for r in rows}
    cols = ["eps", "mean_n1", "delta_y", "label", "residual", "top_level_pop", "n_levels", "mean_n2", "ambiguous"]
    files = [write_table(out / "quantum_sweep.csv", "quantum_sweep", cols, rows)]
    pops = [(r["eps"], n, float(pn)) for r in rows for n, pn in enumerate(r["populations"])]
    files.append(write_table(out / "fock_populations.csv", "fock_populations", ["eps", "n", "p"], pops))
    if cfg.wigner:
        for r in rows:
            wg = r["wigner"]
            tag = _eps_tag(r["eps"])
            xx, yy = np.meshgrid(wg.grid.xs, wg.grid.ys)
            files.append(write_table(out / f"wigner_eps{tag}.csv", "wigner", ["x", "y", "w"],
                                     zip(xx.ravel().tolist(), yy.ravel().tolist(), wg.w.ravel().tolist())))
            files.append(write_table(out / f"proj_y_eps{tag}.csv", "projection", ["axis", "p"],
                                     zip(wg.grid.ys.tolist(), wg.proj_y.tolist())))
            files.append(write_table(out / f"proj_x_eps{tag}.csv", "projection", ["axis", "p"],
                                     zip(wg.grid.xs.tolist(), wg.proj_x.tolist())))
    for r in rows:
        log.info("eps=%.4g  <n1>=%.4f  label=%s  dy=%.3f  N=%d", r["eps"], r["mean_n1"], r["label"],
                 r["delta_y"], r["n_levels"])
    report["quantum_rows"] = rows
    return files


def run_classical(cfg: RunConfig, out: Path, report: dict) -> list[Path]:
    rows = bifurcation_diagram(cfg.params, cfg.eps_values(), cfg.classical_t_final, cfg.classical_dt, seed=cfg.seed)
    ad = [r["eps"] for r in rows if r["regime"] == "AD"]
    if ad:
        report["ad_window"] = [min(ad), max(ad)]
    report["thresholds"] = {"hopf": cfg.params.eps_hopf, "pitchfork": cfg.params.eps_pitchfork}
    return [write_table(out / "classical_bifurcation.csv", "classical_bifurcation", BIFURCATION_COLUMNS, rows)]


def _sde_row(cfg: RunConfig, e: float, out: Path, files: list) -> dict:
    ens = run_ensemble(cfg.params.with_eps(e), cfg.sde, cfg.jobs)
    c = classify_ensemble(ens, prominence=cfg.prominence)
    hi, lo = trajectory_extrema(ens)
    if cfg.dump_samples:
        files.append(write_table(out / f"samples_eps{_eps_tag(e)}.csv", "sde_samples",
                                 ["x1", "y1", "x2", "y2"], ens.pooled.tolist()))
    return {
        "eps": e, "mean_amp_nc": averaged_amplitude(ens), "delta_y_nc": c["delta_y"],
        "n_traj": cfg.sde.n_trajectories, "dt": cfg.sde.dt, "label_nc": c["label"],
        "traj_max_y1": hi, "traj_min_y1": lo, "bin_width": c["bin_width"],
    }


def run_sde(cfg: RunConfig, out: Path, report: dict) -> list[Path]:
    files: list[Path] = []
    rows = [_sde_row(cfg, e, out, files) for e in cfg.eps_values()]
    cols = ["eps", "mean_amp_nc", "delta_y_nc", "n_traj", "dt", "label_nc", "traj_max_y1", "traj_min_y1", "bin_width"]
    files.insert(0, write_table(out / "sde_summary.csv", "sde_summary", cols, rows))
    report["sde_rows"] = rows
    return files


def run_compare(cfg: RunConfig, out: Path, report: dict) -> list[Path]:
    files = run_quantum(cfg, out, report) + run_sde(cfg, out, report)
    qrows, nrows = report["quantum_rows"], report["sde_rows"]
    if [r["eps"] for r in qrows] != [r["eps"] for r in nrows]:
        raise UsageError("quantum and noisy-classical grids differ")
    rows = []
    for q, n in zip(qrows, nrows):
        rows.append({
            "eps": q["eps"], "mean_n1_quantum": q["mean_n1"], "amp_nc": n["mean_amp_nc"],
            "delta_y_quantum": q["delta_y"], "delta_y_nc": n["delta_y_nc"],
            "label_quantum": q["label"], "label_nc": n["label_nc"],
            "quantum_below_nc": q["mean_n1"] < n["mean_amp_nc"],
            "labels_agree": LABEL_MAP[q["label"]] == n["label_nc"],
        })
    cols = list(rows[0])
    files.insert(0, write_table(out / "compare.csv", "compare", cols, rows))
    return files


GNUPLOT = {
    "quantum": 'set datafile separator ","\nset xlabel "eps/k1"\nplot "quantum_sweep.csv" skip 2 u 1:2 w lp t "<n1>", '
               '"" skip 2 u 1:3 w lp t "Delta y"\n',
    "classical": 'set datafile separator ","\nset xlabel "eps/k1"\nplot "classical_bifurcation.csv" skip 2 u 1:7 t "min x1", '
                 '"" skip 2 u 1:8 t "max x1", "" skip 2 u 1:5 w l t "x*"\n',
    "sde": 'set datafile separator ","\nset xlabel "eps/k1"\nplot "sde_summary.csv" skip 2 u 1:2 w lp t "|alpha1|^2 nc", '
           '"" skip 2 u 1:3 w lp t "Delta y nc"\n',
    "compare": 'set datafile separator ","\nset xlabel "eps/k1"\nplot "compare.csv" skip 2 u 1:2 w lp t "<n1> quantum", '
               '"" skip 2 u 1:3 w lp t "|alpha1|^2 noisy classical"\n',
}

RUNNERS = {"quantum": run_quantum, "classical": run_classical, "sde": run_sde, "compare": run_compare}


def execute(cfg: RunConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    report = {"warnings": []}
    files = RUNNERS[cfg.model](cfg, out, report)
    if cfg.gnuplot:
        gp = out / f"plot_{cfg.model}.gp"
        gp.write_text(GNUPLOT[cfg.model], encoding="utf-8")
        files.append(gp)
    manifest = {
        "config": cfg.to_dict(),
        "code_version": __version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "truncation_warnings": report["warnings"],
        "residuals": report.get("residuals", {}),
    }
    for key in ("ad_window", "thresholds"):
        if key in report:
            manifest[key] = report[key]
    write_manifest(out, manifest, files)
    report["files"] = files
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (UsageError, ValueError) as exc:
        parser.error(str(exc))
    try:
        report = execute(cfg)
    except UsageError as exc:
        print(f"qvdp: usage error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"qvdp: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for f in report["files"]:
        print(f)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
