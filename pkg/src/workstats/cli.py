"""``workstats`` command-line driver.

Usage::

    workstats <command> [--config FILE] [--set section.key=value ...] [--out DIR]

Configuration is an INI file; ``--set`` overrides win over the file, and
both win over built-in defaults.  Every output file starts with a ``#``
header block holding the package version and the fully resolved config.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__, exact, tfim, validation
from .contours import (chi_grid, chi_level_function, level_set, level_set_derivative,
                       scaling_conjecture_report)
from .dataset import Dataset, Grid
from .errors import ConfigInvalid, EngineMismatch, WorkstatsError
from .model import ModelKind, QuenchSpec, build_hamiltonian, quench_operator

COMMANDS = ("sweep", "chi-grid", "levelset", "cumulants", "validate", "scaling-report", "sudden-bound")
ENGINES = ("exact", "tfim", "both")
MODELS = {"tfim": ModelKind.tfim, "classical": ModelKind.classical}

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_ENGINE = 0, 1, 2, 3


def _floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text):
    return [int(x) for x in text.replace(",", " ").split()]


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


# section.key -> (parser, default text)
FIELDS = {
    "quench.model": (str, "tfim"),
    "quench.n_sites": (int, "8"),
    "quench.beta": (float, "1.0"),
    "quench.lambda0": (float, "0.5"),
    "quench.lambda_tau": (_opt_float, "none"),
    "quench.dlam": (float, "0.01"),
    "sweep.lambda0_start": (float, "0.0"),
    "sweep.lambda0_stop": (float, "2.0"),
    "sweep.lambda0_steps": (int, "41"),
    "sweep.u_start": (float, "0.0"),
    "sweep.u_stop": (float, "20.0"),
    "sweep.u_steps": (int, "201"),
    "sweep.betas": (_floats, ""),
    "sweep.n_sites_list": (_ints, ""),
    "run.engine": (str, ""),
    "run.name": (str, ""),
    "run.n_max": (int, "4"),
    "run.levels": (_floats, "0.5"),
    "scaling.n1": (int, "100"),
    "scaling.dlam1": (float, "0.01"),
    "scaling.n2": (int, "10"),
    "scaling.dlam2": (float, "0.1"),
    "numeric.dense_cap": (int, "12"),
    "numeric.fd_step": (float, "1e-3"),
    "numeric.seed": (int, "20240611"),
}


@dataclass
class RunConfig:
    command: str
    values: dict
    raw: dict
    out: Path

    def __getitem__(self, key):
        return self.values[key]

    @property
    def model(self) -> ModelKind:
        return MODELS[self["quench.model"]]()

    @property
    def lambda0s(self) -> np.ndarray:
        return np.linspace(self["sweep.lambda0_start"], self["sweep.lambda0_stop"], self["sweep.lambda0_steps"])

    @property
    def us(self) -> np.ndarray:
        return np.linspace(self["sweep.u_start"], self["sweep.u_stop"], self["sweep.u_steps"])

    @property
    def betas(self) -> list:
        return self["sweep.betas"] or [self["quench.beta"]]

    @property
    def n_sites_list(self) -> list:
        return self["sweep.n_sites_list"] or [self["quench.n_sites"]]

    @property
    def dlam(self) -> float:
        lt = self["quench.lambda_tau"]
        return self["quench.dlam"] if lt is None else lt - self["quench.lambda0"]

    @property
    def engines(self) -> list:
        e = self["run.engine"]
        if not e:
            # default: free fermions whenever they apply
            e = "tfim" if self.command != "sudden-bound" and self["quench.model"] == "tfim" else "exact"
        return ["exact", "tfim"] if e == "both" else [e]

    @property
    def name(self) -> str:
        return self["run.name"] or self.command.replace("-", "_")

    def header(self) -> list:
        lines = [f"# workstats {__version__}", f"# command = {self.command}"]
        lines += [f"# config.{k} = {self.raw[k]}" for k in sorted(self.raw)]
        return lines


def load_config(command: str, path: Optional[str], overrides, out: str) -> RunConfig:
    """Resolve defaults, file and ``--set`` overrides into a validated :class:`RunConfig`."""
    raw = {k: d for k, (_, d) in FIELDS.items()}
    if path:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigInvalid("config", str(exc)) from exc
        for section in cp.sections():
            for key, val in cp.items(section):
                full = f"{section}.{key}"
                if full not in FIELDS:
                    raise ConfigInvalid(full, "unknown setting")
                raw[full] = val
    for item in overrides or ():
        if "=" not in item:
            raise ConfigInvalid(item, "override must look like section.key=value")
        key, val = item.split("=", 1)
        key = key.strip()
        if key not in FIELDS:
            matches = [f for f in FIELDS if f.endswith("." + key)]
            if len(matches) != 1:
                raise ConfigInvalid(key, "unknown setting")
            key = matches[0]
        raw[key] = val.strip()
    values = {}
    for key, (parse, _) in FIELDS.items():
        try:
            values[key] = parse(raw[key])
        except ValueError as exc:
            raise ConfigInvalid(key, f"cannot parse {raw[key]!r}: {exc}") from exc
    cfg = RunConfig(command, values, raw, Path(out))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    v = cfg.values
    if cfg.command not in COMMANDS:
        raise ConfigInvalid("command", f"unknown command {cfg.command!r}")
    if v["quench.model"] not in MODELS:
        raise ConfigInvalid("quench.model", f"expected one of {sorted(MODELS)}")
    if v["run.engine"] and v["run.engine"] not in ENGINES:
        raise ConfigInvalid("run.engine", f"expected one of {ENGINES}")
    for b in cfg.betas:
        if not (math.isfinite(b) and b > 0):
            raise ConfigInvalid("quench.beta", "inverse temperatures must be finite and positive")
    for key in ("sweep.lambda0_steps", "sweep.u_steps"):
        if v[key] < 1:
            raise ConfigInvalid(key, "needs at least one point")
    if not math.isfinite(cfg.dlam):
        raise ConfigInvalid("quench.dlam", "quench amplitude must be finite")
    if cfg.command in ("sweep", "cumulants", "chi-grid", "levelset", "sudden-bound"):
        for n in cfg.n_sites_list:
            if n < 2:
                raise ConfigInvalid("quench.n_sites", "spin chains need N >= 2")
            if "exact" in cfg.engines and n > v["numeric.dense_cap"]:
                raise EngineMismatch(f"engine=exact needs N <= {v['numeric.dense_cap']}, got {n}")
            if "tfim" in cfg.engines and (n % 2 or v["quench.model"] != "tfim"):
                raise EngineMismatch("engine=tfim needs an even N and model=tfim")
    if cfg.command == "sudden-bound" and cfg.engines != ["exact"]:
        raise EngineMismatch("sudden-bound needs engine=exact")


# -- output ---------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _meta_lines(meta: dict) -> list:
    return [f"# meta.{k} = {meta[k]}" for k in sorted(meta)]


def write_dataset(path: Path, ds: Dataset, cfg: RunConfig):
    lines = cfg.header() + _meta_lines(ds.meta) + [",".join(ds.header)]
    cols = list(ds.columns.values())
    for i in range(len(ds)):
        lines.append(",".join(fmt(c[i]) for c in cols))
    path.write_text("\n".join(lines) + "\n")


def write_grid(path: Path, grid: Grid, cfg: RunConfig):
    """Row-major grid: first line holds the column axis, first field of later lines the row axis."""
    lines = cfg.header() + _meta_lines(grid.meta)
    lines.append(f"# values = {grid.value_name} [{grid.units[grid.value_name]}]")
    corner = f"{grid.row_name} [{grid.units[grid.row_name]}] \\ {grid.col_name} [{grid.units[grid.col_name]}]"
    lines.append(",".join([corner] + [fmt(c) for c in grid.cols]))
    for r, row in zip(grid.rows, grid.values):
        lines.append(",".join([fmt(r)] + [fmt(x) for x in row]))
    path.write_text("\n".join(lines) + "\n")


def _threads() -> Optional[int]:
    env = os.environ.get("WORKSTATS_THREADS", "").strip()
    return int(env) if env else None


def _pmap(fn: Callable, items) -> list:
    """Order-preserving parallel map; results are indexed by input position."""
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(fn, items))


# -- commands -------------------------------------------------------------

def _tag(n, beta, engine=None):
    base = f"N{n}_beta{fmt(beta)}"
    return f"{base}_{engine}" if engine else base


def _exact_cumulants(cfg, n, beta):
    cap = cfg["numeric.dense_cap"]
    model, dlam, n_max = cfg.model, cfg.dlam, cfg["run.n_max"]

    def point(l0):
        eq = exact.ExactQuench.from_spec(QuenchSpec(model, n, beta, l0, l0 + dlam), cap)
        return eq.cumulants(max(n_max, 3)).as_array()

    ks = np.array(_pmap(point, cfg.lambda0s))
    cols = {"lambda0": cfg.lambda0s}
    units = {"lambda0": "dimensionless"}
    for j in range(1, n_max + 1):
        cols[f"K{j}"] = ks[:, j - 1]
        units[f"K{j}"] = "J" if j == 1 else f"J^{j}"
    cols["K2/N"] = ks[:, 1] / n
    units["K2/N"] = "J^2"
    with np.errstate(divide="ignore", invalid="ignore"):
        cols["gamma"] = ks[:, 2] / ks[:, 1] ** 1.5
    units["gamma"] = "dimensionless"
    return Dataset(cols, units, {"engine": "exact", "n_sites": n, "beta": beta, "dlam": dlam})


def _with_skew_columns(ds: Dataset, n: int, dlam: float) -> Dataset:
    g = ds["gamma"]
    ds.columns["gamma*sqrt(N)"] = g * np.sqrt(n)
    ds.units["gamma*sqrt(N)"] = "dimensionless"
    ds.columns["gamma_M*sqrt(N)"] = g * abs(dlam) ** 3 * np.sqrt(n)
    ds.units["gamma_M*sqrt(N)"] = "dimensionless"
    return ds


def cmd_cumulants(cfg: RunConfig) -> int:
    for n in cfg.n_sites_list:
        for beta in cfg.betas:
            for engine in cfg.engines:
                if engine == "tfim":
                    ds = tfim.cumulant_table(tfim.ModeSet.from_sites(n), cfg.lambda0s, cfg.dlam, beta,
                                             cfg["run.n_max"])
                else:
                    ds = _exact_cumulants(cfg, n, beta)
                ds = _with_skew_columns(ds, n, cfg.dlam)
                write_dataset(cfg.out / f"{cfg.name}_{_tag(n, beta, engine)}.csv", ds, cfg)
    return EXIT_OK


def _sweep_point_tfim(modes, beta, dlam, h):
    def point(l0):
        k1 = tfim.cumulants_analytic(modes, l0, l0 + dlam, beta, 1)[1]
        df = tfim.free_energy_diff(modes, l0, l0 + dlam, beta)
        mean_m, var_m = tfim.magnetization(modes, l0, beta)
        return [df, k1, beta * (k1 - df), mean_m, var_m, tfim.chi_tilde(modes, l0, beta, h) / modes.n_sites]
    return point


def _sweep_point_exact(model, n, beta, dlam, h, cap):
    def point(l0):
        eq = exact.ExactQuench.from_spec(QuenchSpec(model, n, beta, l0, l0 + dlam), cap)
        mean_m, var_m = exact.thermal_magnetization(model, n, l0, beta, cap)
        chi_t = exact.chi_tilde_difference(model, n, l0, beta, h, cap=cap) / n
        return [eq.delta_f, eq.mean_work, eq.lag, mean_m, var_m, chi_t]
    return point


SWEEP_COLUMNS = (("delta_F", "J"), ("mean_W", "J"), ("L_irr", "dimensionless"), ("mean_M", "dimensionless"),
                 ("var_M", "dimensionless"), ("chi_tilde/N", "1/J"))


def cmd_sweep(cfg: RunConfig) -> int:
    h = cfg["numeric.fd_step"]
    for n in cfg.n_sites_list:
        for beta in cfg.betas:
            for engine in cfg.engines:
                if engine == "tfim":
                    point = _sweep_point_tfim(tfim.ModeSet.from_sites(n), beta, cfg.dlam, h)
                else:
                    point = _sweep_point_exact(cfg.model, n, beta, cfg.dlam, h, cfg["numeric.dense_cap"])
                rows = np.array(_pmap(point, cfg.lambda0s))
                cols = {"lambda0": cfg.lambda0s}
                units = {"lambda0": "dimensionless"}
                for j, (name, unit) in enumerate(SWEEP_COLUMNS):
                    cols[name] = rows[:, j]
                    units[name] = unit
                meta = {"engine": engine, "n_sites": n, "beta": beta, "dlam": cfg.dlam}
                write_dataset(cfg.out / f"{cfg.name}_{_tag(n, beta, engine)}.csv", Dataset(cols, units, meta), cfg)
    return EXIT_OK


def _exact_grid(cfg, n, beta):
    model, dlam, us, cap = cfg.model, cfg.dlam, cfg.us, cfg["numeric.dense_cap"]

    def column(l0):
        eq = exact.ExactQuench.from_spec(QuenchSpec(model, n, beta, l0, l0 + dlam), cap)
        return [eq.chi(u).real for u in us]

    vals = np.array(_pmap(column, cfg.lambda0s)).T
    return Grid(us, cfg.lambda0s, vals, "u", "lambda0", "Re chi",
                {"u": "1/J", "lambda0": "dimensionless", "Re chi": "dimensionless"},
                {"engine": "exact", "n_sites": n, "beta": beta, "dlam": dlam})


def _tfim_grid(cfg, n, beta):
    return chi_grid(tfim.ModeSet.from_sites(n), beta, cfg.lambda0s, cfg.us, cfg.dlam)


def cmd_chi_grid(cfg: RunConfig) -> int:
    for n in cfg.n_sites_list:
        for beta in cfg.betas:
            for engine in cfg.engines:
                grid = _tfim_grid(cfg, n, beta) if engine == "tfim" else _exact_grid(cfg, n, beta)
                write_grid(cfg.out / f"{cfg.name}_{_tag(n, beta, engine)}.grid.csv", grid, cfg)
    return EXIT_OK


def cmd_levelset(cfg: RunConfig) -> int:
    u_max = cfg["sweep.u_stop"]
    n_scan = max(cfg["sweep.u_steps"] - 1, 1)
    for n in cfg.n_sites_list:
        for beta in cfg.betas:
            for engine in cfg.engines:
                if engine == "tfim":
                    fn = chi_level_function(tfim.ModeSet.from_sites(n), beta, cfg.dlam)
                else:
                    model, dlam, cap = cfg.model, cfg.dlam, cfg["numeric.dense_cap"]
                    cache = {}

                    def fn(u, l0, cache=cache, model=model, n=n, beta=beta, dlam=dlam, cap=cap):
                        if l0 not in cache:
                            cache[l0] = exact.ExactQuench.from_spec(QuenchSpec(model, n, beta, l0, l0 + dlam), cap)
                        return cache[l0].chi(u).real
                for c in cfg["run.levels"]:
                    curve = level_set(fn, c, cfg.lambda0s, u_max, n_scan)
                    ds = level_set_derivative(curve)
                    ds.meta.update({"engine": engine, "n_sites": n, "beta": beta, "dlam": cfg.dlam,
                                    "gaps": int(curve.gaps.sum())})
                    write_dataset(cfg.out / f"{cfg.name}_{_tag(n, beta, engine)}_c{fmt(c)}.csv", ds, cfg)
    return EXIT_OK


def cmd_scaling_report(cfg: RunConfig) -> int:
    beta = cfg.betas[0]
    rep = scaling_conjecture_report(cfg["scaling.n1"], cfg["scaling.dlam1"], cfg["scaling.n2"],
                                    cfg["scaling.dlam2"], beta, cfg.lambda0s, cfg.us)
    write_grid(cfg.out / f"{cfg.name}_first.grid.csv", rep.first, cfg)
    write_grid(cfg.out / f"{cfg.name}_second.grid.csv", rep.second, cfg)
    diff = Grid(rep.first.rows, rep.first.cols, rep.difference, "u", "lambda0", "delta Re chi",
                {"u": "1/J", "lambda0": "dimensionless", "delta Re chi": "dimensionless"}, rep.params)
    write_grid(cfg.out / f"{cfg.name}_difference.grid.csv", diff, cfg)
    text = cfg.header() + [rep.summary()]
    (cfg.out / f"{cfg.name}.report.txt").write_text("\n".join(text) + "\n")
    print(rep.summary())
    return EXIT_OK


def cmd_sudden_bound(cfg: RunConfig) -> int:
    model, dlam, cap = cfg.model, cfg.dlam, cfg["numeric.dense_cap"]
    for n in cfg.n_sites_list:
        b = quench_operator(model, n, cap)

        def point(l0):
            _, v = np.linalg.eigh(build_hamiltonian(model, n, l0, cap))
            lt = l0 + dlam
            st = exact.eigendecompose(build_hamiltonian(model, n, lt, cap))
            res = exact.sudden_quench_bound(st, b, v[:, 0], lt)
            return res.tau_max, res.unbounded, res.argmax

        rows = _pmap(point, cfg.lambda0s)
        ds = Dataset({"lambda0": cfg.lambda0s, "tau_max": [r[0] for r in rows],
                      "unbounded": [bool(r[1]) for r in rows], "final_state_index": [r[2] for r in rows]},
                     {"lambda0": "dimensionless", "tau_max": "1/J", "unbounded": "flag",
                      "final_state_index": "index"},
                     {"engine": "exact", "n_sites": n, "dlam": dlam, "initial_state": "ground state"})
        write_dataset(cfg.out / f"{cfg.name}_N{n}.csv", ds, cfg)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    results = validation.run_all(seed=cfg["numeric.seed"])
    for r in results:
        print(r.line())
    failed = [r.key for r in results if not r.passed]
    summary = f"{len(results) - len(failed)}/{len(results)} passed" + (f"; failed: {', '.join(failed)}" if failed else "")
    print(summary)
    report = cfg.header() + [r.line(timing=False) for r in results] + [summary]
    (cfg.out / "validate.report.txt").write_text("\n".join(report) + "\n")
    return EXIT_VALIDATION if failed else EXIT_OK


HANDLERS = {
    "sweep": cmd_sweep,
    "chi-grid": cmd_chi_grid,
    "levelset": cmd_levelset,
    "cumulants": cmd_cumulants,
    "validate": cmd_validate,
    "scaling-report": cmd_scaling_report,
    "sudden-bound": cmd_sudden_bound,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="workstats", description="Quantum work statistics for sudden quenches.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file with [quench], [sweep], [run], [scaling], [numeric] sections")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting, e.g. quench.beta=100; repeatable")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--version", action="version", version=f"workstats {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.overrides, args.out)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EngineMismatch as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[cfg.command](cfg)
    except (WorkstatsError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"engine error during {cfg.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
