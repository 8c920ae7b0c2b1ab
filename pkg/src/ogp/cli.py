"""Command-line front end.

Every subcommand takes ``--seed``, ``--config FILE`` (a JSON object of
parameters) and ``--threads``; flags override the config file, which
overrides the defaults. Files written with ``--out`` get a manifest
``<out>.manifest.json`` beside them. Exit status is 0 on success, 2 on
invalid input and 3 when a size cap is exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import io as oio
from .errors import OgpError, ParameterError, ResourceError

DEFAULTS = {
    "gen": {"k": 4, "lambda": 1.0, "n": 100, "t": None, "mean_field": False},
    "energy": {"graph": None, "sigma": None},
    "brute": {"graph": None, "mean_field": False, "k": 4, "n": 12},
    "pairmax": {"graph": None, "mean_field": False, "k": 4, "n": 12, "overlaps": None, "interval": None},
    "factor-run": {"graph": None, "factor": "random"},
    "overlap-curve": {"factor": "random", "k": 4, "lambda": 2.0, "n": 2000, "t_grid": "0,0.25,0.5,0.75,1",
                      "reps": 20},
    "scan-overlap": {"graph": None, "mean_field": True, "k": 4, "n": 14, "eta": 0.02, "bins": None,
                     "absolute_threshold": None},
    "parisi": {"k": 4, "steps": 1, "gamma_const": None, "gamma": None, "h": 0.02, "x_max": None},
    "gt-scan": {"k": 4, "steps": 3, "gamma": None, "p_star": None, "q_grid": None, "h": 0.04, "x_max": None,
                "diagnostic": False, "min_margin": 1e-3},
    "dilution": {"k": 4, "lambdas": "1,2,4,8", "n": 20, "reps": 10, "exact": None},
}
COMMON = {"seed": 0, "threads": None, "out": None}


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"subcommand": self.subcommand, "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        return cls(d["subcommand"], d["params"])

    def __getitem__(self, key):
        return self.params[key]

    def validate(self):
        p = self.params
        if "k" in p and p["k"] is not None and (int(p["k"]) != p["k"] or p["k"] < 2 or p["k"] % 2):
            raise ParameterError(f"--k must be an even integer >= 2, got {p['k']}")
        if "n" in p and p["n"] is not None and (int(p["n"]) != p["n"] or p["n"] < 1):
            raise ParameterError(f"--n must be a positive integer, got {p['n']}")
        if p.get("lambda") is not None and not float(p["lambda"]) >= 0:
            raise ParameterError(f"--lambda must be nonnegative, got {p['lambda']}")
        if p.get("t") is not None and not 0 <= float(p["t"]) <= 1:
            raise ParameterError(f"--t must lie in [0, 1], got {p['t']}")
        if p.get("eta") is not None and not 0 < float(p["eta"]) < 1:
            raise ParameterError(f"--eta must lie in (0, 1), got {p['eta']}")
        if p.get("reps") is not None and int(p["reps"]) < 2:
            raise ParameterError("--reps must be at least 2")
        if p.get("steps") is not None and int(p["steps"]) < 1:
            raise ParameterError("--steps must be at least 1")
        if p.get("h") is not None and not float(p["h"]) > 0:
            raise ParameterError("--h must be positive")
        for key in ("graph", "gamma"):
            if p.get(key) and not Path(p[key]).is_file():
                raise ParameterError(f"--{key} file {p[key]} does not exist")
        return self


def _floats(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


# --------------------------------------------------------------------------
# sources


def _source(cfg: ExperimentConfig):
    from .model import Hypergraph, sample_mean_field

    if cfg.params.get("graph"):
        return Hypergraph.from_json(Path(cfg["graph"]).read_text(encoding="utf-8"))
    if cfg.params.get("mean_field"):
        return sample_mean_field(int(cfg["k"]), int(cfg["n"]), int(cfg["seed"]))
    raise ParameterError("give --graph FILE or --mean-field with --k and --n")


def _emit(cfg, text, started, extra_outputs=()):
    out = cfg.params.get("out")
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        oio.write_manifest(path, json.loads(cfg.to_json()), time.time() - started, [path, *extra_outputs])
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(cfg, started):
    from .model import sample_coupled, sample_er, sample_mean_field

    k, n, seed = int(cfg["k"]), int(cfg["n"]), int(cfg["seed"])
    if cfg.params.get("mean_field"):
        inst = sample_mean_field(k, n, seed)
        text = oio.json_text({"n": n, "k": k, "couplings": inst.couplings}) + "\n"
    elif cfg.params.get("t") is not None:
        ci = sample_coupled(k, float(cfg["lambda"]), float(cfg["t"]), n, seed)
        text = json.dumps(ci.to_dict()) + "\n"
    else:
        text = sample_er(k, float(cfg["lambda"]), n, seed).to_json() + "\n"
    _emit(cfg, text, started)
    return 0


def cmd_energy(cfg, started):
    from .model import cut_density, hamiltonian, magnetization, spins

    g = _source(cfg)
    raw = cfg["sigma"]
    if raw is None:
        raise ParameterError("--sigma is required (comma-separated +-1 values or a JSON file)")
    if Path(str(raw)).is_file():
        values = json.loads(Path(raw).read_text(encoding="utf-8"))
    else:
        values = [int(v) for v in str(raw).split(",")]
    sigma = spins(values)
    h = hamiltonian(g, sigma)
    text = oio.json_text({"energy": h, "cut_density": cut_density(g, sigma),
                          "magnetization": magnetization(sigma)}) + "\n"
    _emit(cfg, text, started)
    return 0


def cmd_brute(cfg, started):
    from .oracle import brute_force_max

    src = _source(cfg)
    best, sigma = brute_force_max(src)
    text = oio.json_text({"max_energy": best, "max_density": best / src.n, "argmax": sigma}) + "\n"
    _emit(cfg, text, started)
    return 0


def cmd_pairmax(cfg, started):
    from .oracle import build_energy_table, constrained_pair_max, mce_by_overlap

    src = _source(cfg)
    table = build_energy_table(src)
    overlaps = _floats(cfg.params.get("overlaps"))
    interval = _floats(cfg.params.get("interval"))
    if overlaps is None and interval is None:
        q, v = mce_by_overlap(table)
        _emit(cfg, oio.csv_text(("q", "mce"), zip(q.tolist(), v.tolist())), started)
        return 0
    mce = constrained_pair_max(table, values=overlaps, interval=tuple(interval) if interval else None)
    _emit(cfg, oio.json_text({"mce": mce, "overlaps": overlaps, "interval": interval}) + "\n", started)
    return 0


def cmd_factor_run(cfg, started):
    from .factors import FactorSpec, run_factor
    from .model import cut_density, magnetization

    g = _source(cfg)
    f = FactorSpec.parse(cfg["factor"])
    sigma = run_factor(g, f, int(cfg["seed"]))
    text = oio.json_text({"factor": str(f), "sigma": sigma, "cut_density": cut_density(g, sigma),
                          "magnetization": magnetization(sigma)}) + "\n"
    _emit(cfg, text, started)
    return 0


def cmd_overlap_curve(cfg, started):
    from .factors import CURVE_COLUMNS, FactorSpec, overlap_curve

    f = FactorSpec.parse(cfg["factor"])
    grid = _floats(cfg["t_grid"])
    if not grid:
        raise ParameterError("--t-grid is empty")
    rows = overlap_curve(f, int(cfg["k"]), float(cfg["lambda"]), int(cfg["n"]), grid, int(cfg["reps"]),
                         int(cfg["seed"]))
    _emit(cfg, oio.csv_text(CURVE_COLUMNS, rows), started)
    return 0


def cmd_scan_overlap(cfg, started):
    from .oracle import build_energy_table, overlap_gap_scan

    src = _source(cfg)
    bins = cfg.params.get("bins")
    eta = float(cfg["eta"])
    abs_thr = cfg.params.get("absolute_threshold")
    if abs_thr is not None:
        # absolute density threshold: translate into the relative form on the exact table
        table = build_energy_table(src)
        best = float(table.max)
        eta = 1.0 - float(abs_thr) * src.n / best if best > 0 else eta
        if not 0 < eta < 1:
            raise ParameterError("absolute threshold must lie strictly between 0 and the maximum density")
    hist = overlap_gap_scan(src, eta, bins=int(bins) if bins else None, seed=int(cfg["seed"]))
    rows = [(lo, hi, c) for lo, hi, c in zip(hist.edges[:-1].tolist(), hist.edges[1:].tolist(),
                                              hist.counts.tolist())]
    text = oio.csv_text(("bin_lo", "bin_hi", "count"), rows)
    out = cfg.params.get("out")
    side = None
    if out:
        side = Path(out).with_suffix(".json")
        oio.write_json(side, {**hist.meta, "seed": int(cfg["seed"])})
    _emit(cfg, text, started, [side] if side else [])
    return 0


def _grid(cfg):
    from .parisi import GridOpts

    return GridOpts(h=float(cfg["h"]), x_max=None if cfg.params.get("x_max") is None else float(cfg["x_max"]))


def cmd_parisi(cfg, started):
    from .parisi import MixtureXi, StepGamma, minimize_parisi, solve_parisi_pde

    xi = MixtureXi(int(cfg["k"]))
    grid = _grid(cfg)
    if cfg.params.get("gamma"):
        gamma = StepGamma.from_json(Path(cfg["gamma"]).read_text(encoding="utf-8"))
        mode = "evaluate"
    elif cfg.params.get("gamma_const") is not None:
        gamma = StepGamma.constant(float(cfg["gamma_const"]))
        mode = "evaluate"
    else:
        gamma, _ = minimize_parisi(xi, int(cfg["steps"]), seed=int(cfg["seed"]), grid=grid)
        mode = "minimize"
    sol = solve_parisi_pde(gamma, xi, grid)
    corr = gamma.correction(xi)
    diag = sol.diagnostics(corr)
    diag["mode"] = mode
    sys.stdout.write(f"P = {oio.fmt(diag['P'])}\n")
    out = cfg.params.get("out")
    if out:
        path = Path(out)
        oio.write_json(path, gamma.to_dict())
        dpath = path.with_name(path.stem + ".diagnostics.json")
        oio.write_json(dpath, diag)
        oio.write_manifest(path, json.loads(cfg.to_json()), time.time() - started, [path, dpath])
    return 0


def cmd_gt_scan(cfg, started):
    from .gtbound import CERT_COLUMNS, CertOpts, gap_certificate
    from .parisi import MixtureXi, StepGamma, minimize_parisi, parisi_functional

    xi = MixtureXi(int(cfg["k"]))
    grid = _grid(cfg)
    if cfg.params.get("gamma"):
        gamma = StepGamma.from_json(Path(cfg["gamma"]).read_text(encoding="utf-8"))
    else:
        gamma, _ = minimize_parisi(xi, int(cfg["steps"]), seed=int(cfg["seed"]))
    p_star = cfg.params.get("p_star")
    p_star = parisi_functional(gamma, xi, grid) if p_star is None else float(p_star)
    q_grid = _floats(cfg.params.get("q_grid"))
    cert = gap_certificate(gamma, p_star, xi, q_grid, grid, CertOpts(min_margin=float(cfg["min_margin"])),
                           seed=int(cfg["seed"]), diagnostic=bool(cfg.params.get("diagnostic")))
    if not cert.applicable and not cert.rows:
        sys.stderr.write("gt-scan: K = 2 is not applicable; rerun with --diagnostic\n")
    rows = [[getattr(r, c) for c in CERT_COLUMNS] for r in cert.rows]
    text = oio.csv_text(CERT_COLUMNS, rows)
    out = cfg.params.get("out")
    side = None
    if out:
        side = Path(out).with_suffix(".json")
        oio.write_json(side, {**cert.summary(), "applicable": cert.applicable, "intervals": cert.intervals,
                              "meta": cert.meta})
    _emit(cfg, text, started, [side] if side else [])
    return 0


def cmd_dilution(cfg, started):
    from .oracle import dilution_compare

    lams = _floats(cfg["lambdas"])
    exact = cfg.params.get("exact")
    rows = dilution_compare(int(cfg["k"]), lams, int(cfg["n"]), int(cfg["reps"]), int(cfg["seed"]),
                            exact=None if exact is None else bool(exact))
    cols = ("lambda", "mean_max_cut_density", "se", "ratio", "mode")
    _emit(cfg, oio.csv_text(cols, rows), started)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "energy": cmd_energy,
    "brute": cmd_brute,
    "pairmax": cmd_pairmax,
    "factor-run": cmd_factor_run,
    "overlap-curve": cmd_overlap_curve,
    "scan-overlap": cmd_scan_overlap,
    "parisi": cmd_parisi,
    "gt-scan": cmd_gt_scan,
    "dilution": cmd_dilution,
}


# --------------------------------------------------------------------------
# argument parsing


def _parser():
    p = argparse.ArgumentParser(prog="ogp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add(name, *specs):
        sp = sub.add_parser(name)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--config")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--out")
        for flag, kw in specs:
            sp.add_argument(flag, default=None, **kw)
        return sp

    k = ("--k", {"type": int})
    n = ("--n", {"type": int})
    lam = ("--lambda", {"type": float, "dest": "lambda"})
    graph = ("--graph", {})
    mf = ("--mean-field", {"action": "store_const", "const": True})
    grid = [("--h", {"type": float}), ("--x-max", {"type": float})]
    add("gen", k, lam, n, ("--t", {"type": float}), mf)
    add("energy", graph, ("--sigma", {}))
    add("brute", graph, mf, k, n)
    add("pairmax", graph, mf, k, n, ("--overlaps", {}), ("--interval", {}))
    add("factor-run", graph, ("--factor", {}))
    add("overlap-curve", ("--factor", {}), k, lam, n, ("--t-grid", {}), ("--reps", {"type": int}))
    add("scan-overlap", graph, mf, k, n, ("--eta", {"type": float}), ("--bins", {"type": int}),
        ("--absolute-threshold", {"type": float}))
    add("parisi", k, ("--steps", {"type": int}), ("--gamma-const", {"type": float}), ("--gamma", {}), *grid)
    add("gt-scan", k, ("--steps", {"type": int}), ("--gamma", {}), ("--p-star", {"type": float}),
        ("--q-grid", {}), *grid, ("--diagnostic", {"action": "store_const", "const": True}),
        ("--min-margin", {"type": float}))
    add("dilution", k, ("--lambdas", {}), n, ("--reps", {"type": int}),
        ("--exact", {"action": "store_const", "const": True}))
    return p


def build_config(argv) -> ExperimentConfig:
    args = _parser().parse_args(argv)
    name = args.subcommand
    params = dict(COMMON)
    params.update(DEFAULTS[name])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ParameterError(f"config file {path} does not exist")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        if "params" in loaded and "subcommand" in loaded:
            loaded = loaded["params"]
        unknown = set(loaded) - set(params)
        if unknown:
            raise ParameterError(f"unknown config keys for {name}: {sorted(unknown)}")
        params.update(loaded)
    for key, value in vars(args).items():
        if key in ("subcommand", "config") or value is None:
            continue
        params[key] = value
    return ExperimentConfig(name, params).validate()


def _threads(cfg):
    t = cfg.params.get("threads")
    if t is None and os.environ.get("OGP_THREADS"):
        t = int(os.environ["OGP_THREADS"])
    if t is None:
        t = os.cpu_count() or 1
    if int(t) < 1:
        raise ParameterError("--threads must be positive")
    # kernels are serial; the value is recorded in the manifest only
    cfg.params["threads"] = int(t)


def main(argv=None) -> int:
    started = time.time()
    try:
        cfg = build_config(sys.argv[1:] if argv is None else argv)
        _threads(cfg)
        return COMMANDS[cfg.subcommand](cfg, started)
    except ResourceError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except (OgpError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        sys.stderr.write(f"error: {msg}\n")
        return 2
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
