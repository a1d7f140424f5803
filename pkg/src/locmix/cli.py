"""Command-line front end.

Every subcommand takes its options from an optional JSON ``--config`` file,
overridden by individual flags. Outputs are CSV with ``#`` metadata lines, or
JSON with a ``meta`` object, and are written atomically.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import __version__, inference, lmm, mixing, nef, region
from .errors import (AccuracyError, FitFailure, InfeasibleError, IterationLimitError, LocmixError,
                     SingularityError)
from .nef import FamilySpec

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
OUTPUT_KEYS = frozenset({"out", "annotations"})


class ConfigError(Exception):
    """Invalid or incomplete run configuration."""


# -- option tables -------------------------------------------------------------


@dataclass(frozen=True)
class Opt:
    name: str
    kind: str  # int, float, str, family, floats, ints, json
    default: object = None
    required: bool = False
    help: str = ""
    choices: tuple | None = None


COMMON = (
    Opt("family", "family", None, True, "family: binomial:N, poisson, normal or a JSON object"),
    Opt("out", "str", "-", help="output path ('-' for stdout)"),
)

COMMANDS: dict[str, tuple[str, tuple[Opt, ...]]] = {
    "fit": ("profile fit of a local mixture model to data", (
        Opt("data", "str", None, True, "data CSV (value[,weight] per line)"),
        Opt("order", "int", 4),
        Opt("grid", "int", 101, help="coarse mu-grid size"),
        Opt("bracket", "floats", None, help="mu search interval LO HI"),
        Opt("workers", "int", None),
    )),
    "fiber-scan": ("fiber log-likelihood on a (lambda2, lambda3) grid", (
        Opt("data", "str", None, True),
        Opt("order", "int", 3),
        Opt("mu0", "float", None, help="fiber center (default: sample mean)"),
        Opt("lam2", "floats", [-1.0, 1.0, 41], help="LO HI N"),
        Opt("lam3", "floats", [-1.0, 1.0, 41], help="LO HI N"),
        Opt("fixed", "floats", [], help="values of lambda4..lambdar"),
        Opt("annotations", "str", None, help="annotation JSON path"),
    )),
    "boundary": ("hard-boundary half-spaces at a center", (
        Opt("mu", "float", None, True),
        Opt("order", "int", 3),
        Opt("window", "floats", None, help="box LO2 HI2 LO3 HI3 ... for the redundancy LPs"),
    )),
    "region": ("extremal generators of the Lambda region", (
        Opt("mu", "float", None, True),
        Opt("lo", "float", None),
        Opt("hi", "float", None),
        Opt("halfwidth", "float", None, help="interval mu +/- halfwidth (alternative to lo/hi)"),
        Opt("order", "int", 4),
        Opt("grid_size", "int", 21),
        Opt("coords", "str", "lambda", choices=("lambda", "central")),
    )),
    "marginal": ("integrated likelihood curve over mu", (
        Opt("data", "str", None, True),
        Opt("eps", "float", None, True, help="mixing support half-width"),
        Opt("order", "int", 4),
        Opt("mu_grid", "floats", None, help="LO HI N (default: mean +/- 4 sd, 101 points)"),
        Opt("n_draws", "int", 4096),
        Opt("grid_size", "int", 41),
        Opt("seed", "int", 0),
        Opt("workers", "int", None),
    )),
    "rate-check": ("empirical approximation rates", (
        Opt("check", "str", "both", choices=("discrete", "laplace", "both")),
        Opt("mu", "float", None, help="center (default: middle of the family's range)"),
        Opt("orders", "ints", [2, 3, 4]),
        Opt("eps", "floats", [0.4, 0.2, 0.1, 0.05], help="discrete schedule"),
        Opt("eps_laplace", "floats", [0.2, 0.1, 0.05, 0.025]),
        Opt("seed", "int", None),
    )),
    "simulate": ("draw data from a finite mixing", (
        Opt("mixing", "json", None, True, 'mixing as {"atoms": [[theta, rho], ...]}'),
        Opt("count", "int", None, True),
        Opt("seed", "int", 0),
    )),
}


def _parse_family(v) -> FamilySpec:
    if isinstance(v, FamilySpec):
        return v
    if isinstance(v, dict):
        return FamilySpec.from_dict(v)
    s = str(v).strip()
    if s.startswith("{"):
        return FamilySpec.from_dict(json.loads(s))
    kind, _, n = s.partition(":")
    return FamilySpec(kind, int(n) if n else None)


def _coerce(opt: Opt, v):
    if v is None:
        return None
    try:
        if opt.kind == "int":
            if isinstance(v, float) and not v.is_integer():
                raise ValueError
            return int(v)
        if opt.kind == "float":
            return float(v)
        if opt.kind == "str":
            s = str(v)
            if opt.choices and s not in opt.choices:
                raise ValueError
            return s
        if opt.kind == "family":
            return _parse_family(v)
        if opt.kind in ("floats", "ints"):
            seq = v if isinstance(v, (list, tuple)) else [v]
            return [int(x) if opt.kind == "ints" else float(x) for x in seq]
        if opt.kind == "json":
            if isinstance(v, str):
                v = json.load(open(v)) if os.path.exists(v) else json.loads(v)
            return v
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {opt.name}: {v!r}") from exc
    raise AssertionError(opt.kind)


def _jsonable(v):
    if isinstance(v, FamilySpec):
        return v.to_dict()
    return v


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def echo(self) -> dict:
        # output locations are left out so reruns into other paths stay byte-identical
        return {k: _jsonable(v) for k, v in sorted(self.values.items()) if k not in OUTPUT_KEYS}


def build_config(command: str, file_cfg: dict, flags: dict) -> RunConfig:
    opts = COMMON + COMMANDS[command][1]
    known = {o.name for o in opts}
    file_cfg = dict(file_cfg)
    file_cfg.pop("command", None)
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for o in opts:
        v = flags.get(o.name)
        if v is None:
            v = file_cfg.get(o.name)
        v = _coerce(o, v)
        if v is None:
            if o.required:
                raise ConfigError(f"missing required option --{o.name.replace('_', '-')}")
            v = o.default
        values[o.name] = v
    return RunConfig(command, values)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="locmix", description="Local mixture model toolkit")
    p.add_argument("--version", action="version", version=f"locmix {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (helptext, opts) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", help="JSON file of options")
        for o in COMMON + opts:
            flag = "--" + o.name.replace("_", "-")
            nargs = "+" if o.kind in ("floats", "ints") else None
            sp.add_argument(flag, dest=o.name, default=None, nargs=nargs, help=o.help,
                            choices=o.choices)
    return p


# -- output helpers ------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _header(cfg: RunConfig, extra: dict | None = None) -> list[str]:
    lines = [f"# locmix {__version__}", f"# command: {cfg.command}",
             f"# config: {json.dumps(cfg.echo(), sort_keys=True)}"]
    if "seed" in cfg.values:
        lines.append(f"# seed: {cfg.values['seed']}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {json.dumps(v, sort_keys=True, default=_json_default)}")
    return lines


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, FamilySpec):
        return o.to_dict()
    raise TypeError(type(o))


def render_csv(cfg, columns, rows, extra=None) -> str:
    buf = io.StringIO()
    for line in _header(cfg, extra):
        buf.write(line + "\n")
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    return buf.getvalue()


def render_json(cfg, payload: dict) -> str:
    meta = {"locmix": __version__, "command": cfg.command, "config": cfg.echo()}
    if "seed" in cfg.values:
        meta["seed"] = cfg.values["seed"]
    return json.dumps({"meta": meta, **payload}, indent=2, sort_keys=True,
                      default=_json_default, allow_nan=True) + "\n"


def write_atomic(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".locmix-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_sample(path: str, family: FamilySpec) -> inference.Sample:
    try:
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc.strerror}") from None
    rows = [ln for ln in lines if ln]
    if not rows:
        raise ConfigError("empty sample")
    xs, ws = [], []
    for i, ln in enumerate(rows):
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) > 2:
            raise ConfigError(f"data line {i + 1}: expected value[,weight]")
        try:
            xs.append(float(parts[0]))
            ws.append(float(parts[1]) if len(parts) == 2 else 1.0)
        except ValueError:
            raise ConfigError(f"data line {i + 1}: not a number: {ln!r}") from None
    try:
        data = inference.Sample(xs, ws)
        family.check_support(data.xs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return data


def _grid(spec, name) -> np.ndarray:
    if len(spec) != 3 or int(spec[2]) < 1:
        raise ConfigError(f"--{name} needs LO HI N")
    return np.linspace(spec[0], spec[1], int(spec[2]))


# -- commands --------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> str:
    fam = cfg.family
    data = read_sample(cfg.data, fam)
    bracket = None
    if cfg.bracket is not None:
        if len(cfg.bracket) != 2:
            raise ConfigError("--bracket needs LO HI")
        bracket = tuple(cfg.bracket)
    fit = inference.profile_fit(fam, data, cfg.order, bracket=bracket, grid=cfg.grid,
                                workers=cfg.workers)
    mu_u, ll_u = inference.unmixed_fit(fam, data)
    model = fit.to_model(fam, cfg.order)
    pos = lmm.positivity_check(model)
    trace = Counter(p.status for p in fit.profile)
    return render_json(cfg, {
        "mu": fit.mu, "lambda": list(map(float, fit.lam)), "loglik": fit.loglik,
        "unmixed": {"mu": mu_u, "loglik": ll_u},
        "positivity": {"status": pos.status, "witness": pos.witness, "min_value": pos.min_value},
        "solver": {"bracket": list(fit.bracket), "grid_status": dict(sorted(trace.items()))},
        "profile": [{"mu": p.mu, "status": p.status, "loglik": p.loglik} for p in fit.profile],
    })


def cmd_fiber_scan(cfg: RunConfig) -> str:
    fam = cfg.family
    data = read_sample(cfg.data, fam)
    if cfg.order < 3:
        raise ConfigError("fiber scans need order >= 3")
    if len(cfg.fixed) != cfg.order - 3:
        raise ConfigError(f"--fixed needs {cfg.order - 3} values for order {cfg.order}")
    mu0 = data.mean() if cfg.mu0 is None else cfg.mu0
    try:
        prob = inference.FiberProblem(fam, cfg.order, mu0, data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    l2, l3 = _grid(cfg.lam2, "lam2"), _grid(cfg.lam3, "lam3")
    rows, singular = [], 0
    for a in l2:
        for b in l3:
            lam = [a, b, *cfg.fixed]
            ll = inference.fiber_loglik(prob, lam)
            flag = not math.isfinite(ll)
            singular += flag
            rows.append((a, b, ll, flag))
    lines = inference.singularity_lines(prob)
    ann = {"mu0": mu0, "singular_cells": singular,
           "singularity_lines": [ln.to_dict() for ln in lines]}
    if fam.support_kind != "real":
        hb = lmm.hard_boundary(fam, mu0, cfg.order)
        ann["hard_boundary"] = {"x": hb.x.tolist(), "coeffs": hb.coeffs.tolist(),
                                "facets": hb.facets().tolist()}
    if cfg.annotations:
        write_atomic(cfg.annotations, render_json(cfg, ann))
    extra = {"mu0": mu0, "singular_cells": singular,
             "singularity_lines": [{"x": ln.x, "on_facet": ln.on_facet, "clearance": ln.clearance}
                                   for ln in lines]}
    return render_csv(cfg, ["lambda2", "lambda3", "loglik", "singular_flag"], rows, extra)


def cmd_boundary(cfg: RunConfig) -> str:
    fam = cfg.family
    window = None
    if cfg.window is not None:
        w = cfg.window
        if len(w) != 2 * (cfg.order - 1):
            raise ConfigError(f"--window needs {2 * (cfg.order - 1)} values")
        window = [(w[2 * i], w[2 * i + 1]) for i in range(cfg.order - 1)]
    if fam.support_kind == "real":
        raise ConfigError("continuous support has no finite half-space list")
    try:
        hb = lmm.hard_boundary(fam, cfg.mu, cfg.order, window=window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cols = ["x", "c0"] + [f"c{i}" for i in range(2, cfg.order + 1)]
    rows = [(x, *c) for x, c in zip(hb.x, hb.coeffs)]
    return render_csv(cfg, cols, rows, {"facets": hb.facets().tolist()})


def cmd_region(cfg: RunConfig) -> str:
    fam = cfg.family
    if cfg.halfwidth is not None:
        lo, hi = cfg.mu - cfg.halfwidth, cfg.mu + cfg.halfwidth
        dlo, dhi = fam.mean_domain
        lo, hi = max(lo, dlo), min(hi, dhi)
    elif cfg.lo is not None and cfg.hi is not None:
        lo, hi = cfg.lo, cfg.hi
    else:
        raise ConfigError("region needs --lo and --hi, or --halfwidth")
    try:
        reg = region.LambdaRegion(fam, cfg.mu, lo, hi, cfg.order)
        ext = reg.extremal_points(cfg.grid_size)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    pts = ext.lam if cfg.coords == "lambda" else ext.central()
    prefix = "lambda" if cfg.coords == "lambda" else "central"
    cols = ["mu1", "mu2", "rho"] + [f"{prefix}{j}" for j in range(2, cfg.order + 1)]
    rows = [(a, b, r, *p) for a, b, r, p in zip(ext.mu1, ext.mu2, ext.rho, pts)]
    return render_csv(cfg, cols, rows, {"interval": [lo, hi], "mode": reg.mode})


def cmd_marginal(cfg: RunConfig) -> str:
    fam = cfg.family
    data = read_sample(cfg.data, fam)
    if cfg.mu_grid is None:
        lo, hi = inference.default_bracket(fam, data)
        grid = np.linspace(lo, hi, 101)
    else:
        grid = _grid(cfg.mu_grid, "mu-grid")
    try:
        curve = inference.integrated_likelihood(fam, data, cfg.order, grid, cfg.eps, cfg.n_draws,
                                                cfg.seed, cfg.grid_size, workers=cfg.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    extra = {"prior": curve.meta["prior"], "mode": region.membership_mode(fam),
             "max_discard_frac": float(np.max(curve.discard_frac))}
    return render_csv(cfg, ["mu", "log_integrated", "mc_se", "log_unmixed", "discard_frac"],
                      curve.rows(), extra)


def _default_center(fam: FamilySpec) -> float:
    return {"binomial": (fam.n or 0) / 2, "poisson": 5.0, "normal": 0.0}[fam.kind]


def cmd_rate_check(cfg: RunConfig) -> str:
    fam = cfg.family
    mu = _default_center(fam) if cfg.mu is None else cfg.mu
    rows = []
    for r in cfg.orders:
        if cfg.check in ("discrete", "both"):
            res = inference.rate_check_discrete(fam, mu, r, cfg.eps, seed=cfg.seed)
            rows.append(("discrete", r, res.slope, res.expected, res.inconclusive,
                         int(res.usable.sum())))
        if cfg.check in ("laplace", "both"):
            res = inference.rate_check_laplace(fam, mixing.squared_deviance(), mu, r, cfg.eps_laplace)
            rows.append(("laplace", r, res.slope, res.expected, res.inconclusive,
                         int(res.usable.sum())))
    return render_csv(cfg, ["check", "order", "slope", "expected", "inconclusive", "n_usable"],
                      rows, {"mu": mu})


def cmd_simulate(cfg: RunConfig) -> str:
    fam = cfg.family
    try:
        Q = mixing.DiscreteMixing.from_dict(cfg.mixing)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad mixing: {exc}") from None
    if cfg.count < 0:
        raise ConfigError("--count must be nonnegative")
    xs = mixing.mixture_sample(fam, Q, cfg.count, seed=cfg.seed)
    extra = {}
    if fam.is_discrete and xs.size:
        extra["modes"] = mixing.count_modes(xs, fam)
    buf = _header(cfg, extra)
    vals = [_fmt(int(v)) if fam.is_discrete else _fmt(v) for v in xs]
    return "\n".join(buf + vals) + "\n"


HANDLERS = {"fit": cmd_fit, "fiber-scan": cmd_fiber_scan, "boundary": cmd_boundary,
            "region": cmd_region, "marginal": cmd_marginal, "rate-check": cmd_rate_check,
            "simulate": cmd_simulate}


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    for k, v in list(flags.items()):
        # single-valued options arrive as strings; list options as lists
        if isinstance(v, list) and len(v) == 1 and k in ("family", "mixing"):
            flags[k] = v[0]
    try:
        file_cfg = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    file_cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(file_cfg, dict):
                raise ConfigError("config must be a JSON object")
        cfg = build_config(args.command, file_cfg, flags)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            text = HANDLERS[args.command](cfg)
        write_atomic(cfg.out, text)
    except ConfigError as exc:
        print(f"locmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitFailure, AccuracyError, IterationLimitError, SingularityError,
            InfeasibleError) as exc:
        print(f"locmix: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LocmixError, ValueError) as exc:
        print(f"locmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
