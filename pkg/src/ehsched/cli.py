"""Config-driven runner: solve, simulate, oracle, crosscheck and props commands.

Configs are INI files::

    [problem]
    horizon = 2
    comm_cost = 0.8
    battery_cap = 1

    [energy]
    initial_offset = 1
    initial_weights = 1
    harvest_offset = 0
    harvest_weights = 1

    [source]
    kind = random_walk
    init_offset = -1
    init_weights = 0.25, 0.5, 0.25
    noise_offset = -1
    noise_weights = 0.25, 0.5, 0.25

    [distortion]
    kind = indicator

    [run]
    command = crosscheck

A pmf is an integer offset plus the weights on offset, offset+1, ...  Gaussian
sources use ``kind = gaussian_radial`` and a ``[source.gaussian]`` section
with ``dim``, ``lambda``, ``s1`` and ``s2``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import BudgetExceeded, exact_cost
from .dist import TOL, Pmf, property_suite
from .model import (DistortionSpec, GaussianSpec, ProblemSpec, SourceSpec,
                    monte_carlo_cost, sample_trajectory)
from .oracle import OracleReport, enumerate_all, threshold_family_dp
from .solver import (GridTooSmall, RadialGridCfg, StructuralViolation, expected_cost,
                     solve)

log = logging.getLogger(__name__)

COMMANDS = ("solve", "simulate", "oracle", "crosscheck", "props")
PRESETS = ("fixed_budget", "no_constraint", "iid")
PMF_SUM_TOL = 1e-9

EXIT_OK, EXIT_CONFIG, EXIT_STRUCTURE, EXIT_BUDGET = 0, 2, 3, 4

THRESHOLDS_HEADER = ("t", "e", "threshold")
VALUES_HEADER = ("t", "d_or_r", "e", "J", "U")
SUMMARY_HEADER = ("seed_count", "rollouts", "mean_cost", "std_err", "solver_predicted_cost")
TRACE_HEADER = ("t", "x", "e", "u", "y", "xhat", "cost")
CROSSCHECK_HEADER = ("solver_cost", "family_dp_cost", "oracle_cost", "gap_family", "gap_oracle")
PROPS_HEADER = ("property", "trials", "failures", "passed")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: ProblemSpec
    command: str = "solve"
    seeds: list[int] = field(default_factory=lambda: [0])
    rollouts: int = 100_000
    output_dir: Path = Path("out")
    radial_grid: RadialGridCfg | None = None
    preset: str | None = None
    budget: int = 1_000_000
    trials: int = 1000
    plots: bool = False


# ---------------------------------------------------------------------------
# parsing

def _pmf(sec: configparser.SectionProxy, offset_key: str, weights_key: str) -> Pmf:
    where = f"[{sec.name}] {weights_key}"
    try:
        lo = sec.getint(offset_key, fallback=0)
        raw = sec[weights_key]
    except KeyError:
        raise ConfigError(f"[{sec.name}] is missing {weights_key}") from None
    except ValueError as ex:
        raise ConfigError(f"[{sec.name}] {offset_key}: {ex}") from None
    try:
        w = np.array([float(v) for v in raw.replace(",", " ").split()])
    except ValueError as ex:
        raise ConfigError(f"{where}: {ex}") from None
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError(f"{where}: weights must be non-negative numbers")
    total = w.sum()
    if abs(total - 1.0) > PMF_SUM_TOL:
        raise ConfigError(f"{where}: weights sum to {total!r}, not 1")
    if abs(total - 1.0) > TOL:
        w = w / total
    return Pmf(lo, tuple(w.tolist()))


def _num(sec, key, kind=float, fallback=None):
    try:
        if fallback is None and key not in sec:
            raise ConfigError(f"[{sec.name}] is missing {key}")
        return kind(sec.get(key, fallback=str(fallback)))
    except ValueError as ex:
        raise ConfigError(f"[{sec.name}] {key}: {ex}") from None


def _section(cp: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not cp.has_section(name):
        raise ConfigError(f"missing section [{name}]")
    return cp[name]


def _read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as ex:
        raise ConfigError(str(ex)) from None
    return cp


def _spec_from(cp: configparser.ConfigParser) -> ProblemSpec:
    prob = _section(cp, "problem")
    energy = _section(cp, "energy")
    src = _section(cp, "source")
    kind = src.get("kind", "random_walk")
    if kind == "gaussian_radial":
        gsec = _section(cp, "source.gaussian")
        gauss = GaussianSpec(_num(gsec, "dim", int, 1), _num(gsec, "lambda", float, 1.0),
                             _num(gsec, "s1", float, 1.0), _num(gsec, "s2", float, 1.0))
        source = SourceSpec(kind, gaussian=gauss)
    else:
        source = SourceSpec(kind, _pmf(src, "init_offset", "init_weights"),
                            _pmf(src, "noise_offset", "noise_weights"))
    dsec = cp["distortion"] if cp.has_section("distortion") else {}
    distortion = DistortionSpec(dsec.get("kind", "indicator"), float(dsec.get("k", 1.0)))
    B = _num(prob, "battery_cap", int)
    harvest = _pmf(energy, "harvest_offset", "harvest_weights")
    if harvest.hi > B:
        log.warning("harvest support reaches %d > battery_cap %d; excess is clipped", harvest.hi, B)
    return ProblemSpec(_num(prob, "horizon", int), _num(prob, "comm_cost"), B,
                       _pmf(energy, "initial_offset", "initial_weights"), harvest,
                       source, distortion)


def parse_spec(path) -> ProblemSpec:
    """Read a ProblemSpec from an INI file; ConfigError names the bad field."""
    try:
        return _spec_from(_read(path))
    except ConfigError:
        raise
    except ValueError as ex:
        raise ConfigError(str(ex)) from None


def _weights(p: Pmf) -> str:
    return ", ".join(repr(v) for v in p.weights)


def serialize_spec(spec: ProblemSpec) -> str:
    cp = configparser.ConfigParser()
    cp["problem"] = {"horizon": str(spec.horizon), "comm_cost": repr(spec.comm_cost),
                     "battery_cap": str(spec.battery_cap)}
    cp["energy"] = {"initial_offset": str(spec.initial_energy.lo),
                    "initial_weights": _weights(spec.initial_energy),
                    "harvest_offset": str(spec.harvest.lo),
                    "harvest_weights": _weights(spec.harvest)}
    src = spec.source
    if src.kind == "gaussian_radial":
        g = src.gaussian
        cp["source"] = {"kind": src.kind}
        cp["source.gaussian"] = {"dim": str(g.dim), "lambda": repr(g.lam),
                                 "s1": repr(g.s1), "s2": repr(g.s2)}
    else:
        cp["source"] = {"kind": src.kind,
                        "init_offset": str(src.init.lo), "init_weights": _weights(src.init),
                        "noise_offset": str(src.noise.lo), "noise_weights": _weights(src.noise)}
    cp["distortion"] = {"kind": spec.distortion.kind, "k": repr(spec.distortion.k)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def apply_preset(spec: ProblemSpec, preset: str | None, k: int | None = None) -> ProblemSpec:
    """Expand the special-case shortcuts before solving."""
    if preset is None:
        return spec
    if preset == "fixed_budget":
        K = spec.B if k is None else k
        if K < 0:
            raise ConfigError("fixed_budget needs K >= 0")
        return spec.with_(battery_cap=K, initial_energy=Pmf.point(K),
                          harvest=Pmf.point(0))
    if preset == "no_constraint":
        return spec.with_(battery_cap=1, initial_energy=Pmf.point(1), harvest=Pmf.point(1))
    if preset == "iid":
        src = spec.source
        if src.kind == "gaussian_radial":
            raise ConfigError("the iid preset needs a discrete source")
        return spec.with_(source=SourceSpec("iid", src.init, src.noise))
    raise ConfigError(f"unknown preset {preset!r}")


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse the spec plus the optional [run] section; ``overrides`` win."""
    cp = _read(path)
    run = cp["run"] if cp.has_section("run") else {}
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}

    def opt(key, default):
        return ov.get(key, run.get(key, default))

    try:
        spec = _spec_from(cp)
        preset = opt("preset", None) or None
        k = opt("preset_k", None)
        spec = apply_preset(spec, preset, None if k is None else int(k))
        seeds = opt("seeds", "0")
        if isinstance(seeds, str):
            seeds = [int(s) for s in seeds.replace(",", " ").split()]
        h, rmax = opt("radial_h", None), opt("radial_rmax", None)
        grid = None
        if h is not None or rmax is not None:
            grid = RadialGridCfg(None if h is None else float(h),
                                 None if rmax is None else float(rmax))
        cfg = RunConfig(spec, str(opt("command", "solve")), list(seeds),
                        int(opt("rollouts", 100_000)), Path(opt("output_dir", "out")), grid,
                        preset, int(opt("budget", 1_000_000)), int(opt("trials", 1000)),
                        bool(opt("plots", False)))
    except ConfigError:
        raise
    except ValueError as ex:
        raise ConfigError(str(ex)) from None
    if cfg.command not in COMMANDS:
        raise ConfigError(f"[run] command: unknown command {cfg.command!r}")
    if cfg.rollouts < 1:
        raise ConfigError("[run] rollouts must be positive")
    if not cfg.seeds:
        raise ConfigError("[run] seeds must not be empty")
    return cfg


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _threshold_rows(pol):
    for t in range(1, pol.T + 1):
        for e in range(pol.B + 1):
            yield t, e, float(pol.thresholds[t - 1, e])


def _value_rows(vt):
    grid = vt.grid.astype(float) if vt.kind == "radial" else vt.grid
    for t in range(1, vt.T + 1):
        for i, d in enumerate(grid):
            for e in range(vt.B + 1):
                yield t, d.item(), e, float(vt.values[t - 1, i, e]), int(vt.decisions[t - 1, i, e])


def _plots(out: Path, vt, pol):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots()
    ts = np.arange(1, pol.T + 1)
    for e in range(1, pol.B + 1):
        ax.step(ts, pol.thresholds[:, e], where="mid", label=f"e={e}")
    ax.set_xlabel("t")
    ax.set_ylabel("threshold")
    ax.legend()
    fig.savefig(out / "thresholds.svg", metadata={"Date": None})
    plt.close(fig)

    fig, ax = plt.subplots()
    e = vt.B
    for t in range(1, vt.T + 1):
        ax.plot(vt.grid, vt.values[t - 1, :, e], label=f"t={t}")
    ax.set_xlabel("r" if vt.kind == "radial" else "d")
    ax.set_ylabel(f"J_t(., {e})")
    ax.legend()
    fig.savefig(out / "values.svg", metadata={"Date": None})
    plt.close(fig)


def _solver_cost(spec, vt, pol) -> float:
    if spec.source.kind == "gaussian_radial":
        return expected_cost(spec, vt)
    return exact_cost(spec, pol)


def run(cfg: RunConfig) -> int:
    """Execute one command, writing CSVs to ``cfg.output_dir``; returns an exit code."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.spec
    (out / "resolved_spec.ini").write_text(serialize_spec(spec))
    try:
        if cfg.command == "props":
            fails = property_suite(cfg.trials, seed=cfg.seeds[0])
            _write_csv(out / "props.csv", PROPS_HEADER,
                       [(n, cfg.trials, f, int(f == 0)) for n, f in fails.items()])
            return EXIT_OK if not any(fails.values()) else 1

        vt, pol = solve(spec, cfg.radial_grid)
        if cfg.command == "solve":
            _write_csv(out / "thresholds.csv", THRESHOLDS_HEADER, _threshold_rows(pol))
            _write_csv(out / "values.csv", VALUES_HEADER, _value_rows(vt))
            if cfg.plots:
                _plots(out, vt, pol)
        elif cfg.command == "simulate":
            for s in cfg.seeds:
                tr = sample_trajectory(spec, pol, s)
                rows = [(t + 1, tr.x[t], tr.e[t], tr.u[t],
                         "eps" if tr.y[t] is None else _fmt(list(np.atleast_1d(tr.y[t][0]))),
                         tr.xhat[t], tr.cost[t]) for t in range(spec.T)]
                _write_csv(out / f"trace_seed{s}.csv", TRACE_HEADER, rows)
            mean, se = monte_carlo_cost(spec, pol, cfg.rollouts, cfg.seeds)
            _write_csv(out / "summary.csv", SUMMARY_HEADER,
                       [(len(cfg.seeds), cfg.rollouts, mean, se, expected_cost(spec, vt))])
        elif cfg.command == "oracle":
            rep = enumerate_all(spec, cfg.budget)
            _write_csv(out / "oracle_report.csv", OracleReport.HEADER, [rep.row()])
        elif cfg.command == "crosscheck":
            solver_cost = _solver_cost(spec, vt, pol)
            fam = threshold_family_dp(spec)
            rep = enumerate_all(spec, cfg.budget)
            _write_csv(out / "crosscheck.csv", CROSSCHECK_HEADER,
                       [(solver_cost, fam, rep.best_cost, fam - solver_cost,
                         solver_cost - rep.best_cost)])
    except StructuralViolation as ex:
        print(f"structural violation: {ex}; witness (t, e, d) = {ex.witness}", file=sys.stderr)
        return EXIT_STRUCTURE
    except BudgetExceeded as ex:
        print(f"budget exceeded: {ex}", file=sys.stderr)
        return EXIT_BUDGET
    except GridTooSmall as ex:
        print(f"radial grid too small: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ehsched",
                                description="Transmission scheduling under energy harvesting.")
    p.add_argument("--config", required=True, help="INI problem file")
    p.add_argument("--command", choices=COMMANDS)
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--rollouts", type=int)
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--preset-k", dest="preset_k", type=int,
                   help="transmission budget K for the fixed_budget preset")
    p.add_argument("--budget", type=int, help="oracle strategy budget")
    p.add_argument("--trials", type=int, help="trials per property in props")
    p.add_argument("--radial-h", dest="radial_h", type=float)
    p.add_argument("--radial-rmax", dest="radial_rmax", type=float)
    p.add_argument("--plots", action="store_true", default=None, help="also write SVG plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config, vars(args))
    except (ConfigError, OSError) as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
