"""Command-line experiment runner.

Every subcommand reads an optional flat ``key = value`` configuration file,
applies command-line overrides, writes its CSV tables (and optional SVG
plots) into a fresh timestamped run directory together with
``config.resolved``, and exits with

* 0 on success,
* 2 for an unknown subcommand or bad usage,
* 3 for a missing or invalid configuration (the message names the file),
* 4 when the numerics abort (a ``diagnostic.txt`` is written).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid or missing configuration."""


# ---------------------------------------------------------------------------
# parameter types


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(" ", "").split(",") if v)


def _pairs(s: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in s.replace(" ", "").split(","):
        if item:
            a, b = item.split(":")
            out.append((int(a), int(b)))
    return tuple(out)


_FMT = {
    int: str,
    float: repr,
    str: str,
    _bool: lambda v: "true" if v else "false",
    _ints: lambda v: ",".join(str(x) for x in v),
    _floats: lambda v: ",".join(repr(x) for x in v),
    _pairs: lambda v: ",".join(f"{a}:{b}" for a, b in v),
}


def _convert(kind, raw: str):
    if kind is int:
        f = float(raw)
        if not f.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(f)
    return kind(raw)


@dataclass
class Param:
    kind: object
    default: object
    help: str = ""


COMMON = {
    "seed": Param(int, 0, "RNG seed"),
    "out": Param(str, "runs", "parent directory of the run directories"),
}

GRID = {
    "L1": Param(int, 1, "the x1 period is 2 pi L1"),
    "n1": Param(int, 16, "grid points along x1"),
    "nper": Param(int, 16, "grid points along each periodic axis"),
}


def _grid(**over):
    g = {k: Param(p.kind, over.get(k, p.default), p.help) for k, p in GRID.items()}
    return g


# ---------------------------------------------------------------------------
# configuration


def parse_config_file(path) -> dict[str, str]:
    """Raw ``key = value`` pairs of a config file; '#' starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out = {}
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{no}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"{p}:{no}: empty key")
        out[k.replace("-", "_")] = v
    return out


def resolve_config(params: dict[str, Param], file_values: dict[str, str], flags: dict[str, str],
                   source: str = "<flags>", command: str | None = None) -> dict:
    """Defaults, then the file, then flags; every value is type-checked."""
    cfg = {k: p.default for k, p in params.items()}
    for origin, values in ((source, file_values), ("<flags>", flags)):
        for k, raw in values.items():
            if k == "subcommand":
                if command is not None and raw != command:
                    raise ConfigError(f"{origin}: config is for subcommand {raw!r}, not {command!r}")
                continue
            if k not in params:
                raise ConfigError(f"{origin}: unknown key {k!r}")
            try:
                cfg[k] = _convert(params[k].kind, raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{origin}: bad value for {k!r}: {exc}") from exc
    return cfg


def format_resolved(command: str, params: dict[str, Param], cfg: dict) -> str:
    lines = [f"# spnls {__version__}", f"subcommand = {command}"]
    for k in sorted(params):
        lines.append(f"{k} = {_FMT[params[k].kind](cfg[k])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# run context and output helpers


@dataclass
class Run:
    command: str
    cfg: dict
    directory: Path | None
    plot: bool
    files: list = field(default_factory=list)
    plots: list = field(default_factory=list)

    def csv(self, name: str, header, rows) -> Path:
        path = self.directory / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        self.files.append(path)
        return path

    def summary(self, items) -> Path:
        return self.csv("summary.csv", ["key", "value"], list(items))

    def figure(self, name, x, series: dict, xlabel="", ylabel="", logx=False, logy=False):
        self.plots.append((name, x, series, xlabel, ylabel, logx, logy))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        return repr(v)
    return "" if v is None else str(v)


def _write_plots(run: Run) -> None:
    if not run.plots:
        return
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("warning: --plot needs matplotlib; no figures written", file=sys.stderr)
        return
    for name, x, series, xl, yl, logx, logy in run.plots:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, y in series.items():
            ax.plot(x, y, marker="o", ms=3, label=label)
        ax.set_xscale("log" if logx else "linear")
        ax.set_yscale("log" if logy else "linear")
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        path = run.directory / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        run.files.append(path)


def _run_directory(out: str, command: str) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    base = Path(out) / f"{command}-{stamp}"
    d, i = base, 1
    while d.exists():
        d = Path(f"{base}-{i}")
        i += 1
    d.mkdir(parents=True)
    return d


# ---------------------------------------------------------------------------
# shared builders


def _spec(cfg):
    from .grid import GridSpec

    try:
        return GridSpec(cfg["L1"], cfg["n1"], cfg["nper"])
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def _need_dyadic(spec, N, what="N"):
    if N < 1 or N & (N - 1):
        raise ConfigError(f"{what}={N} is not a power of two")
    if N > spec.nyquist / 2:
        raise ConfigError(f"{what}={N} exceeds half the Nyquist frequency {spec.nyquist / 2:g} of the grid")


def _positive(cfg, *keys):
    for k in keys:
        v = cfg[k]
        vals = v if isinstance(v, tuple) else (v,)
        if not vals or any(not x > 0 for x in vals):
            raise ConfigError(f"{k} must be positive, got {v!r}")


def _bump(width: float, side: float, n4: int):
    from .grid import EuclidField

    return EuclidField.from_function(
        lambda a, b, c, d: np.exp(-(a * a + b * b + c * c + d * d) / (2.0 * width * width)), side, n4)


def _random_h1(spec, N, rng, h1=1.0):
    from .grid import Field
    from .norms import h1_norm
    from .spectral import random_band_limited

    f = Field(spec, random_band_limited(spec, N, rng))
    return f * (h1 / h1_norm(f))


def _plane_wave(spec, A, k):
    from .grid import Field

    if len(k) != 4:
        raise ConfigError(f"k needs 4 lattice components, got {k!r}")
    xi = [k[0] / spec.L1, k[1], k[2], k[3]]
    if max(abs(v) for v in xi) > spec.nyquist / 2:
        raise ConfigError(f"wave vector {k} exceeds half the Nyquist frequency")
    ph = sum(spec.broadcast(a, xi[a] * spec.axes_x()[a]) for a in range(4))
    return Field(spec, A * np.exp(1j * ph) * np.ones(spec.shape)), xi


def _grid_plan(spec):
    return [f"grid: L1={spec.L1} n1={spec.n1} nper={spec.nper} ({spec.size} points)"]


# ---------------------------------------------------------------------------
# subcommands; each returns (plan lines, runner)


def cmd_evolve(cfg):
    from .norms import l2_norm
    from .solver import SolveConfig, check_conservation, evolve, write_trajectory

    spec = _spec(cfg)
    _positive(cfg, "T", "dt", "record_stride")
    data = cfg["data"]
    if data not in ("plane-wave", "random", "zero"):
        raise ConfigError(f"data must be plane-wave, random or zero, got {data!r}")
    if data == "random":
        _need_dyadic(spec, cfg["N"])
    if data == "plane-wave":
        u0, xi = _plane_wave(spec, cfg["A"], cfg["k"])
    plan = _grid_plan(spec) + [f"steps: {math.ceil(cfg['T'] / cfg['dt'] - 1e-9)} of dt={cfg['dt']:g}"]

    def run(r: Run):
        nonlocal u0
        if data == "random":
            u0 = _random_h1(spec, cfg["N"], np.random.default_rng(cfg["seed"]), cfg["h1"])
        elif data == "zero":
            u0 = spec.zeros()
        sc = SolveConfig(dt=cfg["dt"], rho=cfg["rho"], record_stride=cfg["record_stride"])
        u = evolve(u0, cfg["T"], sc)
        tab = check_conservation(u, cfg["rho"])
        errs = [None] * len(u)
        if data == "plane-wave":
            w = (xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2 + xi[3] ** 2) + cfg["rho"] * abs(cfg["A"]) ** 2
            for i, t in enumerate(u.times):
                ex = u0 * np.exp(-1j * w * t)
                errs[i] = l2_norm(u.field(i) - ex) / l2_norm(ex)
        r.csv("evolve.csv", ["index", "t", "mass", "energy", "rel_l2_error"],
              [(i, t, M, E, errs[i]) for i, t, M, E in tab.rows()])
        items = [("mass_drift", tab.mass_drift), ("energy_drift", tab.energy_drift)]
        if data == "plane-wave":
            items.append(("max_rel_l2_error", max(errs)))
        r.summary(items)
        if cfg["write_fields"]:
            write_trajectory(u, r.directory / "trajectory", cfg["rho"])
        r.figure("energy", u.times, {"energy": tab.energy}, "t", "E")

    return plan, run


def cmd_conserve(cfg):
    from .solver import SolveConfig, check_conservation, evolve

    spec = _spec(cfg)
    _positive(cfg, "T", "dt")
    _need_dyadic(spec, cfg["N"])
    dts = [cfg["dt"] / 2**i for i in range(cfg["levels"])]
    plan = _grid_plan(spec) + [f"time steps: {', '.join(f'{d:g}' for d in dts)}"]

    def run(r: Run):
        u0 = _random_h1(spec, cfg["N"], np.random.default_rng(cfg["seed"]), cfg["h1"])
        rows, series = [], []
        for dt in dts:
            stride = max(1, int(round(cfg["sample_every"] / dt)))
            u = evolve(u0, cfg["T"], SolveConfig(dt=dt, rho=cfg["rho"], record_stride=stride))
            tab = check_conservation(u, cfg["rho"])
            rows.append((dt, tab.mass_drift, tab.energy_drift))
            series += [(dt, i, t, M, E) for i, t, M, E in tab.rows()]
        r.csv("conserve.csv", ["dt", "mass_drift", "energy_drift"], rows)
        r.csv("conserve_series.csv", ["dt", "index", "t", "mass", "energy"], series)
        ratios = [a[2] / b[2] if b[2] > 0 else float("nan") for a, b in zip(rows[:-1], rows[1:])]
        r.summary([("max_mass_drift", max(x[1] for x in rows)), ("energy_drift_dt", rows[0][2])]
                  + [(f"energy_ratio_{i}", v) for i, v in enumerate(ratios)])
        r.figure("energy_drift", [x[0] for x in rows], {"energy drift": [x[2] for x in rows]}, "dt",
                 "relative drift", True, True)

    return plan, run


def cmd_picard(cfg):
    from .norms import sup_h1
    from .solver import SolveConfig, picard_solve
    from .spectral import propagate

    spec = _spec(cfg)
    _need_dyadic(spec, cfg["N"])
    _positive(cfg, "dt", "tol")
    if len(cfg["I"]) != 2 or not cfg["I"][1] > cfg["I"][0]:
        raise ConfigError(f"I must be 'a,b' with a < b, got {cfg['I']!r}")
    plan = _grid_plan(spec) + [f"interval {cfg['I']} with dt={cfg['dt']:g}"]

    def run(r: Run):
        u0 = _random_h1(spec, cfg["N"], np.random.default_rng(cfg["seed"]), cfg["h1"])
        sc = SolveConfig(dt=cfg["dt"], scheme="picard", tol=cfg["tol"], max_iter=cfg["max_iter"], rho=cfg["rho"])
        u, diag = picard_solve(u0, cfg["I"], sc)
        ratios = [None] + list(diag.ratios)
        r.csv("picard.csv", ["iteration", "difference", "ratio"],
              [(i + 1, d, ratios[i] if i < len(ratios) else None) for i, d in enumerate(diag.differences)])
        from .norms import Trajectory

        lin = Trajectory(spec, u.times, np.stack([propagate(u0, t - u.times[0]).values for t in u.times]))
        gap = sup_h1(Trajectory(spec, u.times, u.data - lin.data))
        r.summary([("converged", diag.converged), ("iterations", diag.iterations),
                   ("linear_zprime", diag.linear_zprime), ("duhamel_residual", diag.residual),
                   ("sup_h1_gap_to_linear", gap), ("h1_data", cfg["h1"])])
        r.figure("picard", list(range(1, len(diag.differences) + 1)), {"difference": diag.differences},
                 "iteration", "sup H1 difference", False, True)

    return plan, run


def cmd_stability(cfg):
    from .norms import Trajectory
    from .solver import SolveConfig, evolve, stability_experiment
    from .strichartz import loglog_fit

    spec = _spec(cfg)
    _positive(cfg, "T", "dt", "eps")
    _need_dyadic(spec, cfg["N"])
    u_base, _ = _plane_wave(spec, cfg["A"], cfg["k"])
    plan = _grid_plan(spec) + [f"{len(cfg['eps'])} perturbations, T={cfg['T']:g}, dt={cfg['dt']:g}"]

    def run(r: Run):
        rng = np.random.default_rng(cfg["seed"])
        w = _random_h1(spec, cfg["N"], rng)
        sc = SolveConfig(dt=cfg["dt"], rho=cfg["rho"], record_stride=cfg["record_stride"])
        base = evolve(u_base, cfg["T"], sc)
        # the base is an exact solution of the discrete scheme
        zero = Trajectory(spec, base.times, np.zeros_like(base.data))
        rows = []
        for eps in cfg["eps"]:
            rep = stability_experiment(base, zero, u_base + w * eps, sc)
            rows.append((eps, rep.eps_in, rep.deviation, rep.amplification))
        r.csv("stability.csv", ["eps", "eps_in", "deviation", "amplification"], rows)
        slope, icpt, res = loglog_fit([x[1] for x in rows], [x[2] for x in rows])
        r.summary([("slope", slope), ("intercept", icpt), ("fit_residual", res),
                   ("max_amplification", max(x[3] for x in rows))])
        r.figure("stability", [x[1] for x in rows], {"deviation": [x[2] for x in rows]}, "eps",
                 "sup H1 deviation", True, True)

    return plan, run


def cmd_euclid_compare(cfg):
    from .euclid import rescale_TN, tail_fraction
    from .solver import euclidean_comparison

    spec = _spec(cfg)
    for N in cfg["Ns"]:
        _need_dyadic(spec, N)
    _positive(cfg, "R", "T0", "ds", "width", "side", "n4")
    for N in cfg["Ns"]:
        if 2 * cfg["R"] / N > math.pi * min(1, spec.L1):
            raise ConfigError(f"window support 2R/N = {2 * cfg['R'] / N:g} exceeds pi at N={N}")
    plan = _grid_plan(spec) + [f"R^4 box: side={cfg['side']:g} n4={cfg['n4']}", f"scales {cfg['Ns']}"]

    def run(r: Run):
        phi = _bump(cfg["width"], cfg["side"], cfg["n4"])
        rows = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for N in cfg["Ns"]:
                rep = euclidean_comparison(phi, N, cfg["R"], cfg["T0"], spec, cfg["ds"], cfg["rho"],
                                           cfg["record_stride"], resolution_tol=cfg["resolution_tol"])
                tail = tail_fraction(rescale_TN(phi, spec, N), 0.5)
                rows.append((N, cfg["R"], cfg["T0"], rep.discrepancy, rep.relative, tail))
        r.csv("euclid_compare.csv", ["N", "R", "T0", "discrepancy", "relative", "tail_fraction"], rows)
        d = [x[3] for x in rows]
        r.summary([("monotone_decreasing", all(b <= a for a, b in zip(d[:-1], d[1:]))), ("max_discrepancy", max(d))])
        r.figure("euclid_compare", list(cfg["Ns"]), {"discrepancy": d}, "N", "sup H1 discrepancy", True, True)

    return plan, run


def _scaling_summary(r: Run, rep, extra=()):
    from .strichartz import write_report_csv

    path = r.directory / f"{rep.name}.csv"
    write_report_csv(rep, path)
    r.files.append(path)
    mx = np.asarray(rep.max_constants, float)
    spread = float(mx.max() / mx.min()) if mx.min() > 0 else float("inf")
    r.csv("summary.csv", ["p", "slope", "intercept", "residual", "max_constant", "spread", "ensemble_size", "flags"],
          [(rep.p, rep.slope, rep.intercept, rep.residual, float(mx.max()), spread, rep.ensemble_size,
            ";".join(rep.flags))])
    if extra:
        r.csv("summary_extra.csv", ["key", "value"], list(extra))
    r.csv("max_constants.csv", ["N", "max_constant"], [(str(N), c) for N, c in zip(rep.Ns, mx)])


def cmd_strichartz_scan(cfg):
    from .strichartz import scan_grid, strichartz_scan

    _positive(cfg, "Ns", "ensemble", "n_t")
    if cfg["mix"] not in ("gaussian", "concentrated", "mixed"):
        raise ConfigError(f"mix must be gaussian, concentrated or mixed, got {cfg['mix']!r}")
    plan = [f"N={N}: grid {scan_grid(N, cfg['L1']).shape}" for N in cfg["Ns"]]
    plan.append(f"{cfg['ensemble']} draws per N, {cfg['n_t']} time samples")

    def run(r: Run):
        rep = strichartz_scan(cfg["p"], cfg["Ns"], cfg["ensemble"], cfg["seed"], cfg["n_t"], cfg["L1"], cfg["mix"])
        _scaling_summary(r, rep, [("predicted_exponent", rep.extra["predicted_exponent"])])
        r.figure("strichartz", list(rep.Ns), {"max raw norm": rep.extra["raw_max"]}, "N", "max L^p norm", True, True)

    return plan, run


def cmd_dispersive_scan(cfg):
    from .strichartz import scan_grid, dispersive_scan

    _positive(cfg, "Ns", "n_t", "t_lo", "t_hi")
    plan = [f"N={N}: grid {scan_grid(N, cfg['L1']).shape}" for N in cfg["Ns"]]

    def run(r: Run):
        rep = dispersive_scan(cfg["Ns"], (cfg["t_lo"], cfg["t_hi"]), cfg["n_t"], cfg["L1"], cfg["family"],
                              cfg["seed"], cfg["draws"])
        _scaling_summary(r, rep)

    return plan, run


def cmd_bilinear_scan(cfg):
    from .strichartz import bilinear_scan

    if not cfg["pairs"]:
        raise ConfigError("pairs must list at least one N1:N2 pair")
    plan = [f"pairs {cfg['pairs']}, {cfg['ensemble']} draws each"]

    def run(r: Run):
        rep = bilinear_scan(cfg["pairs"], cfg["ensemble"], cfg["seed"], cfg["n_t"], cfg["L1"])
        rows = [(f"{a}:{b}", g, c) for (a, b), g, c in zip(rep.Ns, rep.extra["gain"], rep.max_constants)]
        r.csv("bilinear.csv", ["pair", "gain", "max_ratio"], rows)
        r.summary([("kappa", rep.slope), ("intercept", rep.intercept), ("residual", rep.residual)])

    return plan, run


def cmd_smoothing_check(cfg):
    from .grid import Field
    from .spectral import random_band_limited
    from .strichartz import local_smoothing_check

    spec = _spec(cfg)
    for K in cfg["Ks"]:
        _need_dyadic(spec, K, "K")
    if not 0 < cfg["delta"] <= 1:
        raise ConfigError("delta must lie in (0, 1]")
    plan = _grid_plan(spec) + [f"K in {cfg['Ks']}, {cfg['draws']} draws"]

    def run(r: Run):
        rng = np.random.default_rng(cfg["seed"])
        rows = []
        for K in cfg["Ks"]:
            # data localized to the shell K, so the ratio is not diluted by other shells
            for j in range(cfg["draws"]):
                phi = Field(spec, random_band_limited(spec, K, rng, shell=True))
                rows.append((K, j, local_smoothing_check(phi, cfg["delta"], K)))
        r.csv("smoothing.csv", ["K", "draw", "ratio"], rows)
        mx = {K: max(x[2] for x in rows if x[0] == K) for K in cfg["Ks"]}
        r.summary([(f"max_ratio_K{K}", v) for K, v in mx.items()] + [("max_ratio", max(mx.values()))])

    return plan, run


def cmd_extinction(cfg):
    from .strichartz import extinction_check, scan_grid

    _positive(cfg, "T1s", "width", "side", "n4", "per_octave")
    plan = [f"N={cfg['N']}: grid {scan_grid(cfg['N']).shape}", f"T1 in {cfg['T1s']}"]

    def run(r: Run):
        psi = _bump(cfg["width"], cfg["side"], cfg["n4"])
        rep = extinction_check(psi, cfg["N"], cfg["T1s"], per_octave=cfg["per_octave"])
        r.csv("extinction.csv", ["T1", "z_outside"], list(zip(rep.T1s, rep.z_values)))
        rows = []
        for T1, prof in zip(rep.T1s, rep.shell_profiles):
            rows += [(T1, M, v) for M, v in sorted(prof.items())]
        r.csv("extinction_shells.csv", ["T1", "M", "value"], rows)
        r.summary([("decreasing", rep.decreasing)])
        r.figure("extinction", list(rep.T1s), {"Z outside": rep.z_values}, "T1", "Z", True, True)

    return plan, run


def cmd_weyl(cfg):
    from .circle import weyl_bound_check

    _positive(cfg, "Ns", "n_t", "oversample")
    plan = [f"N in {cfg['Ns']}, {cfg['n_t']} t-samples each"]

    def run(r: Run):
        rows, summ = [], []
        for N in cfg["Ns"]:
            rep = weyl_bound_check(N, n_t=cfg["n_t"], oversample=cfg["oversample"])
            rows += rep.rows()
            summ.append((N, rep.max_ratio))
        r.csv("weyl.csv", ["N", "t", "a", "q", "beta", "sup_S", "ratio"], rows)
        vals = [v for _, v in summ]
        r.csv("summary.csv", ["N", "max_ratio"], summ)
        r.csv("summary_extra.csv", ["key", "value"], [("spread", max(vals) / min(vals))])
        r.figure("weyl", [x[0] for x in summ], {"max ratio": vals}, "N", "ratio", True, False)

    return plan, run


def cmd_farey_coeffs(cfg):
    from .circle import farey_bump_coeffs, farey_identity_check

    _positive(cfg, "Q", "M", "n_t", "m_max")
    S = cfg["S"] or tuple(range(1, cfg["Q"] + 1))
    if any(q < 1 or q > cfg["Q"] for q in S):
        raise ConfigError("S must contain integers in 1..Q")
    plan = [f"Q={cfg['Q']} M={cfg['M']} t-grid {cfg['n_t']}"]

    def run(r: Run):
        chk = farey_identity_check(S, cfg["M"], cfg["Q"], cfg["n_t"], m_max=cfg["m_max"])
        r.csv("farey_identity.csv", ["t", "lhs", "rhs"], zip(chk.t, chk.lhs, chk.rhs))
        ms = np.arange(-cfg["m_max"], cfg["m_max"] + 1)
        r.csv("farey_coeffs.csv", ["m", "c_m"], zip(ms, farey_bump_coeffs(S, cfg["M"], cfg["Q"], ms)))
        r.summary([("max_error", chk.max_error), ("tail_bound", chk.tail_bound), ("max_abs_cm", chk.max_abs_cm),
                   ("cm_bound", chk.cm_bound)])

    return plan, run


def cmd_divisors(cfg):
    from .circle import divisor_level_set_check, ramanujan_bound_check

    _positive(cfg, "Q", "gamma", "P", "D", "B")
    if cfg["m_hi"] < cfg["m_lo"]:
        raise ConfigError("m_hi must be >= m_lo")
    plan = [f"Q={cfg['Q']}, m in [{cfg['m_lo']}, {cfg['m_hi']}]"]

    def run(r: Run):
        rep = ramanujan_bound_check(cfg["Q"], (cfg["m_lo"], cfg["m_hi"]), cfg["gamma"])
        r.csv("ramanujan.csv", ["m", "lhs", "divisors", "ratio"], zip(rep.ms, rep.lhs, rep.divisors, rep.ratios))
        lv = divisor_level_set_check(cfg["P"], cfg["Q"], cfg["D"], cfg["gamma"], cfg["B"])
        r.summary([("max_ratio", rep.max_ratio), ("argmax_m", rep.argmax), ("level_set_count", lv.count),
                   ("level_set_shape", lv.bound_shape), ("level_set_constant", lv.implied_constant)])

    return plan, run


def cmd_kernel_decomp(cfg):
    from .circle import kernel_decomposition, lambda_window, level_L

    lo, hi = lambda_window(cfg["N"], cfg["p0"])
    lam = cfg["lam"] if cfg["lam"] > 0 else math.sqrt(lo * hi)
    if not lo <= lam <= hi:
        raise ConfigError(f"lam={lam:g} outside the window [{lo:g}, {hi:g}]")
    if cfg["N"] < 32 or not cfg["p0"] > 18 / 5:
        raise ConfigError("kernel-decomp needs N >= 32 and p0 > 18/5")
    plan = [f"N={cfg['N']} p0={cfg['p0']} lam={lam:g} (L={level_L(cfg['N'], lam, cfg['p0'])})",
            f"{cfg['n_samples']} sample points"]

    def run(r: Run):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = kernel_decomposition(cfg["N"], lam, cfg["p0"], cfg["n_samples"], cfg["seed"], cfg["margin"],
                                     cfg["b"], r=cfg["r"])
        rows = ((i, *d.points[i], d.times[i], d.KN[i], d.K1[i], d.K2[i], d.K3[i]) for i in range(d.times.size))
        r.csv("kernel_samples.csv", ["index", "x1", "x2", "x3", "x4", "t", "KN", "K1", "K2", "K3"], rows)
        r.summary(d.summary().items())

    return plan, run


def cmd_distr_check(cfg):
    from .circle import distributional_check, lambda_window

    _positive(cfg, "Ns", "draws", "n_lambda", "n_t", "oversample")
    for N in cfg["Ns"]:
        lambda_window(N, cfg["p0"])
    plan = [f"N={N}: grid n={2 * N * cfg['oversample']} per period" for N in cfg["Ns"]]
    plan.append(f"{cfg['draws']} draws, {cfg['n_lambda']} thresholds, {cfg['n_t']} times")

    def run(r: Run):
        rows, summ = [], []
        for N in cfg["Ns"]:
            rep = distributional_check(N, p0=cfg["p0"], draws=cfg["draws"], seed=cfg["seed"],
                                       n_lambda=cfg["n_lambda"], n_t=cfg["n_t"], oversample=cfg["oversample"])
            rows += rep.rows()
            summ.append((N, rep.max_constant, rep.monotone))
        r.csv("distribution.csv", ["N", "draw", "lambda", "measure", "band", "constant"], rows)
        r.csv("summary.csv", ["N", "max_constant", "monotone"], summ)
        c = [x[1] for x in summ]
        r.csv("summary_extra.csv", ["key", "value"], [("spread", max(c) / min(c))])

    return plan, run


def cmd_lambda(cfg):
    from .euclid import rescale_TN
    from .grid import read_field
    from .profiles import lambda_functional

    spec = _spec(cfg)
    if not cfg["input"]:
        _need_dyadic(spec, cfg["N"])
    plan = _grid_plan(spec) + [f"input: {cfg['input'] or f'bubble at N={cfg[chr(78)]}'}"]

    def run(r: Run):
        if cfg["input"]:
            f = read_field(cfg["input"])
        else:
            f = rescale_TN(_bump(cfg["width"], cfg["side"], cfg["n4"]), spec, cfg["N"])
        ts = np.linspace(-1.0, 1.0, cfg["n_t"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = lambda_functional(f, ts)
        r.csv("lambda.csv", ["value", "N", "t", "x1", "x2", "x3", "x4"], [(res.value, res.N, res.t, *res.x)])

    return plan, run


def _two_bubble_sequence(spec, cfg):
    from .euclid import rescale_TN
    from .grid import Field

    per = lambda x, c, P: np.remainder(x - c + P / 2, P) - P / 2  # noqa: E731
    ax = spec.axes_x()
    r2 = sum(spec.broadcast(i, per(ax[i], math.pi, spec.periods()[i]) ** 2) for i in range(4))
    psi = Field(spec, cfg["A"] * np.exp(-r2 / (2 * cfg["sigma"] ** 2)) + 0j)
    phi = _bump(cfg["width"], cfg["side"], cfg["n4"])
    h = spec.dxp
    seq = []
    for k in range(cfg["members"]):
        x0 = (0.0, cfg["drift"] * k * h, 0.0, 0.0)
        seq.append(psi + rescale_TN(phi, spec, cfg["N"], x0))
    return seq


def cmd_profile_decompose(cfg):
    from .profiles import orthogonality_report, profile_decompose, write_decomposition

    spec = _spec(cfg)
    _need_dyadic(spec, cfg["N"])
    _positive(cfg, "delta", "members", "sigma", "width")
    plan = _grid_plan(spec) + [f"{cfg['members']} members, delta={cfg['delta']:g}"]

    def run(r: Run):
        seq = _two_bubble_sequence(spec, cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = profile_decompose(seq, cfg["delta"], euclid_threshold=cfg["euclid_threshold"], R=cfg["R"])
        write_decomposition(d, r.directory / "decomposition")
        rep = orthogonality_report(d)
        r.csv("profiles.csv", ["profile", "kind", "norm", "cauchy", "R", "flagged"],
              [(a, e.kind, e.norm, e.cauchy, e.R, e.flagged) for a, e in enumerate(d.extractions)])
        r.summary([("count", d.count), ("converged", d.converged), ("remainder_lambda", d.remainder_lambda),
                   ("l2_residual", rep.l2_residual), ("h1dot_residual", rep.grad_residual),
                   ("l4_residual", rep.l4_residual),
                   ("max_cross_inner", float(np.max(rep.inner - np.diag(np.diag(rep.inner)), initial=0.0)))])

    return plan, run


def cmd_sobolev_check(cfg):
    from .euclid import rescale_TN
    from .norms import refined_sobolev_check

    spec = _spec(cfg)
    for N in cfg["bubble_Ns"] + cfg["random_Ns"]:
        _need_dyadic(spec, N)
    plan = _grid_plan(spec) + [f"{cfg['count']} fields"]

    def run(r: Run):
        rng = np.random.default_rng(cfg["seed"])
        phi = _bump(cfg["width"], cfg["side"], cfg["n4"])
        c = complex(cfg["scale_re"], cfg["scale_im"])
        fams = []
        for N in cfg["bubble_Ns"]:
            fams.append(("bubble", N, lambda N=N: rescale_TN(phi, spec, N)))
        top = int(spec.nyquist // 2)
        for k0 in range(1, top + 1):
            fams.append(("plane-wave", k0, lambda k0=k0: _plane_wave(spec, 1.0, (0, k0, 0, 0))[0]))
        rows = []
        i = 0
        while len(rows) < cfg["count"]:
            if i < len(fams):
                fam, par, make = fams[i]
                f = make()
            else:
                N = cfg["random_Ns"][i % len(cfg["random_Ns"])]
                fam, par, f = "random", N, _random_h1(spec, N, rng)
            a = refined_sobolev_check(f)
            b = refined_sobolev_check(f * c)
            rows.append((len(rows), fam, par, a, abs(b - a) / a))
            i += 1
        r.csv("sobolev.csv", ["index", "family", "param", "ratio", "scaling_defect"], rows)
        r.summary([("max_ratio", max(x[3] for x in rows)), ("max_scaling_defect", max(x[4] for x in rows))])

    return plan, run


# ---------------------------------------------------------------------------
# registry


_PHI = {
    "width": Param(float, 1.0, "width of the Gaussian bump on R^4"),
    "side": Param(float, 8 / math.pi, "the R^4 box is [-pi side, pi side)^4"),
    "n4": Param(int, 32, "box points per axis"),
}

COMMANDS = {
    "evolve": (cmd_evolve, "Strang-split evolution of plane-wave, random or zero data.", {
        **_grid(), "T": Param(float, 1.0), "dt": Param(float, 1e-3), "rho": Param(float, 1.0, "nonlinearity sign"),
        "data": Param(str, "plane-wave", "plane-wave | random | zero"), "A": Param(float, 0.5, "plane-wave amplitude"),
        "k": Param(_ints, (1, 0, 0, 0), "lattice wave vector"), "N": Param(int, 2, "band of random data"),
        "h1": Param(float, 1.0, "H1 norm of random data"), "record_stride": Param(int, 100),
        "write_fields": Param(_bool, False, "also write the field files and times.csv")},
        "evolve.csv: index,t,mass,energy,rel_l2_error (error against the exact plane wave, blank otherwise)\n"
        "summary.csv: key,value (mass_drift, energy_drift, max_rel_l2_error)"),
    "conserve": (cmd_conserve, "Mass and energy drift of random data for dt, dt/2, ...", {
        **_grid(), "T": Param(float, 1.0), "dt": Param(float, 1e-3), "levels": Param(int, 2, "number of step sizes"),
        "rho": Param(float, 1.0), "N": Param(int, 2), "h1": Param(float, 1.0),
        "sample_every": Param(float, 0.01, "time between recorded samples")},
        "conserve.csv: dt,mass_drift,energy_drift\nconserve_series.csv: dt,index,t,mass,energy\n"
        "summary.csv: key,value (energy_ratio_i = drift(dt_i) / drift(dt_{i+1}))"),
    "picard": (cmd_picard, "Fixed-point Duhamel iteration for small data.", {
        **_grid(), "I": Param(_floats, (0.0, 0.1)), "dt": Param(float, 1e-3), "tol": Param(float, 1e-10),
        "max_iter": Param(int, 50), "rho": Param(float, 1.0), "N": Param(int, 2), "h1": Param(float, 0.01)},
        "picard.csv: iteration,difference,ratio\nsummary.csv: key,value"),
    "stability": (cmd_stability, "Deviation of perturbed plane-wave solutions against the perturbation size.", {
        **_grid(), "A": Param(float, 0.5), "k": Param(_ints, (1, 0, 0, 0)), "eps": Param(_floats, (1e-2, 1e-3, 1e-4)),
        "T": Param(float, 1.0), "dt": Param(float, 1e-3), "rho": Param(float, 1.0), "N": Param(int, 2),
        "record_stride": Param(int, 10)},
        "stability.csv: eps,eps_in,deviation,amplification\nsummary.csv: key,value (slope of log deviation "
        "against log eps_in)"),
    "euclid-compare": (cmd_euclid_compare, "Torus evolution of T_N phi against the rescaled R^4 evolution.", {
        **_grid(n1=32, nper=32), **_PHI, "Ns": Param(_ints, (1, 2, 4)), "R": Param(float, 1.0), "T0": Param(float, 1.0),
        "ds": Param(float, 0.01), "rho": Param(float, 1.0), "record_stride": Param(int, 10),
        "resolution_tol": Param(float, 0.05, "largest H1 share allowed above half the Nyquist frequency")},
        "euclid_compare.csv: N,R,T0,discrepancy,relative,tail_fraction\nsummary.csv: key,value"),
    "strichartz-scan": (cmd_strichartz_scan, "Ensemble scan of the space-time L^p Strichartz ratio.", {
        "p": Param(float, 19 / 5), "Ns": Param(_ints, (2, 4, 8)), "ensemble": Param(int, 64),
        "n_t": Param(int, 128), "L1": Param(int, 1), "mix": Param(str, "mixed", "gaussian | concentrated | mixed")},
        "strichartz.csv: p,N,draw,constant, then a summary row (slope,intercept,residual,max_constant)\n"
        "summary.csv: p,slope,intercept,residual,max_constant,spread,ensemble_size,flags\n"
        "max_constants.csv: N,max_constant"),
    "dispersive-scan": (cmd_dispersive_scan, "Dispersive decay constant of P_N-localized data.", {
        "Ns": Param(_ints, (4, 8)), "t_lo": Param(float, 0.01), "t_hi": Param(float, 1.0), "n_t": Param(int, 64),
        "L1": Param(int, 16), "family": Param(str, "delta", "delta | random-signs"), "draws": Param(int, 4)},
        "dispersive.csv: p,N,draw,constant plus summary row\nsummary.csv and max_constants.csv as strichartz-scan"),
    "bilinear-scan": (cmd_bilinear_scan, "Bilinear product norms for frequency-separated free waves.", {
        "pairs": Param(_pairs, ((2, 2), (4, 2), (8, 2))), "ensemble": Param(int, 4), "n_t": Param(int, 64),
        "L1": Param(int, 1)},
        "bilinear.csv: pair,gain,max_ratio\nsummary.csv: key,value (kappa)"),
    "smoothing-check": (cmd_smoothing_check, "Local smoothing ratio over random shell-localized data.", {
        **_grid(n1=32, nper=32), "delta": Param(float, 0.25), "Ks": Param(_ints, (2, 4, 8)),
        "draws": Param(int, 16)},
        "smoothing.csv: K,draw,ratio\nsummary.csv: key,value"),
    "extinction": (cmd_extinction, "Z-norm of a rescaled free wave outside its core time window.", {
        **_PHI, "N": Param(int, 8), "T1s": Param(_floats, (1.0, 4.0, 16.0)), "per_octave": Param(int, 8)},
        "extinction.csv: T1,z_outside\nextinction_shells.csv: T1,M,value\nsummary.csv: key,value"),
    "weyl": (cmd_weyl, "Weyl-sum bound normalized by the rational approximation of t / 2 pi.", {
        "Ns": Param(_ints, (16, 32, 64)), "n_t": Param(int, 256), "oversample": Param(int, 8)},
        "weyl.csv: N,t,a,q,beta,sup_S,ratio\nsummary.csv: N,max_ratio\nsummary_extra.csv: key,value (spread)"),
    "farey-coeffs": (cmd_farey_coeffs, "Farey-bump Fourier identity and coefficient bound.", {
        "Q": Param(int, 8), "M": Param(int, 64), "S": Param(_ints, (), "denominators (default 1..Q)"),
        "n_t": Param(int, 4096), "m_max": Param(int, 1000)},
        "farey_identity.csv: t,lhs,rhs\nfarey_coeffs.csv: m,c_m\nsummary.csv: key,value"),
    "divisors": (cmd_divisors, "Ramanujan-sum bound by truncated divisor counts; divisor level sets.", {
        "Q": Param(int, 128), "m_lo": Param(int, -10000), "m_hi": Param(int, 10000), "gamma": Param(float, 0.25),
        "P": Param(int, 10000), "D": Param(int, 8), "B": Param(float, 1.0)},
        "ramanujan.csv: m,lhs,divisors,ratio\nsummary.csv: key,value"),
    "kernel-decomp": (cmd_kernel_decomp, "Three-piece split of the kernel K_N at one threshold lambda.", {
        "N": Param(int, 64), "p0": Param(float, 3.7), "lam": Param(float, 0.0, "0 selects the window midpoint"),
        "n_samples": Param(int, 10000), "margin": Param(int, 40), "b": Param(int, 8), "r": Param(float, 2.0)},
        "kernel_samples.csv: index,x1,x2,x3,x4,t,KN,K1,K2,K3 (complex values)\nsummary.csv: key,value"),
    "distr-check": (cmd_distr_check, "Superlevel-set measures of random band-limited free waves.", {
        "Ns": Param(_ints, (8, 16)), "p0": Param(float, 3.7), "draws": Param(int, 32), "n_lambda": Param(int, 8),
        "n_t": Param(int, 8), "oversample": Param(int, 2)},
        "distribution.csv: N,draw,lambda,measure,band,constant\nsummary.csv: N,max_constant,monotone\n"
        "summary_extra.csv: key,value (spread)"),
    "lambda": (cmd_lambda, "Concentration functional of a field file or of a rescaled bump.", {
        **_grid(n1=32, nper=32), **_PHI, "N": Param(int, 8), "n_t": Param(int, 64),
        "input": Param(str, "", "field file; empty uses the bump T_N phi")},
        "lambda.csv: value,N,t,x1,x2,x3,x4"),
    "profile-decompose": (cmd_profile_decompose, "Profile decomposition of a synthetic two-bubble sequence.", {
        **_grid(n1=32, nper=32), **_PHI, "N": Param(int, 8), "A": Param(float, 0.3, "scale-one bubble amplitude"),
        "sigma": Param(float, 0.7, "scale-one bubble width"), "members": Param(int, 4),
        "drift": Param(int, 4, "grid cells the Euclidean bubble moves per member"), "delta": Param(float, 0.05),
        "R": Param(float, 4.0), "euclid_threshold": Param(float, 8.0)},
        "profiles.csv: profile,kind,norm,cauchy,R,flagged\nsummary.csv: key,value\n"
        "decomposition/frames.csv: profile,k,kind,N,t,x1,x2,x3,x4\ndecomposition/residuals.csv: quantity,k,residual"),
    "sobolev-check": (cmd_sobolev_check, "Refined Sobolev ratio over bubbles, plane waves and random fields.", {
        **_grid(), **_PHI, "count": Param(int, 100), "bubble_Ns": Param(_ints, (1, 2, 4)),
        "random_Ns": Param(_ints, (1, 2, 4)), "scale_re": Param(float, 3.7), "scale_im": Param(float, -2.1)},
        "sobolev.csv: index,family,param,ratio,scaling_defect\nsummary.csv: key,value"),
}


def _params(command: str) -> dict[str, Param]:
    return {**COMMON, **COMMANDS[command][2]}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spnls", description="Experiments for the cubic NLS on R x T^3.")
    ap.add_argument("--version", action="version", version=f"spnls {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True
    for name, (_, desc, params, schema) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc, epilog="CSV output:\n" + schema,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--plot", action="store_true", help="also write SVG figures")
        sp.add_argument("--dry-run", action="store_true", help="validate and print the plan; write nothing")
        for k, p in {**COMMON, **params}.items():
            default = _FMT[p.kind](p.default)
            sp.add_argument(f"--{k.replace('_', '-')}", dest=k, default=None, metavar="V",
                            help=f"{p.help} (default: {default})".lstrip())
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.command
    params = _params(command)
    flags = {k: v for k, v in vars(ns).items() if k in params and v is not None}
    try:
        file_values = parse_config_file(ns.config) if ns.config else {}
        cfg = resolve_config(params, file_values, flags, ns.config or "<flags>", command)
        plan, runner = COMMANDS[command][0](cfg)
    except ConfigError as exc:
        print(f"spnls: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.dry_run:
        print(f"spnls {command} (dry run)")
        for line in plan:
            print(f"  {line}")
        return EXIT_OK
    d = _run_directory(cfg["out"], command)
    (d / "config.resolved").write_text(format_resolved(command, params, cfg), encoding="utf-8")
    run = Run(command, cfg, d, ns.plot)
    t0 = time.perf_counter()
    try:
        runner(run)
    except Exception as exc:  # numerical aborts are reported, everything else propagates
        from .euclid import ResolutionError
        from .solver import NumericalAbort

        if not isinstance(exc, (NumericalAbort, ResolutionError, FloatingPointError)):
            raise
        diag = getattr(exc, "diagnostic", {}) or {}
        lines = [f"{type(exc).__name__}: {exc}"] + [f"{k} = {v}" for k, v in sorted(diag.items())]
        (d / "diagnostic.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"spnls: numerical abort: {exc} (see {d / 'diagnostic.txt'})", file=sys.stderr)
        return EXIT_NUMERIC
    if ns.plot:
        _write_plots(run)
    print(f"{command}: wrote {len(run.files)} files to {d} in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
