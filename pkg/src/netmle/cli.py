"""Command-line front end: run, analyze, and compare the dynamics.

All file outputs are deterministic for a fixed configuration: numbers are
written with 17 significant digits and every file is written to a temp name
and renamed into place, so a failed command leaves no partial files.
Figures are rendered next to the delimited output unless --no-plot is given.

Examples:
  netmle run --family path --n 4 --dynamics ml --out out/
  netmle analyze --family path --n 20 --out out/
  netmle compare --family star --n 100 --out out/
  netmle run --edges graph.txt --dynamics ml_memory --out out/
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import analysis, plots, process
from .errors import InsufficientData, NetmleError, Undetermined
from .graphs import (
    Graph,
    complete_graph,
    cycle_graph,
    path_graph,
    path_order,
    random_connected_graph,
    read_edge_list,
    star_graph,
)
from .process import SignalModel, StopCriteria

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNDETERMINED = 2

_FAMILIES = {
    "path": path_graph,
    "star": star_graph,
    "cycle": cycle_graph,
    "complete": complete_graph,
}


@dataclass
class ExperimentConfig:
    family: str | None = None
    n: int | None = None
    p: float | None = None
    seed: int | None = None
    edges: str | None = None
    dynamics: str = "ml"
    sigma0: str = "identity"
    eps_consensus: float = 1e-12
    eps_variance_drop: float = 1e-12
    max_iters: int = 10_000
    rtol: float = 1e-12
    centered: bool = False
    out: str = "."
    sample_seeds: list[int] = field(default_factory=list)
    plot: bool = True

    def validate(self) -> None:
        if (self.family is None) == (self.edges is None):
            raise ValueError("exactly one graph source: --family with --n, or --edges")
        if self.family is not None:
            if self.family not in (*_FAMILIES, "random"):
                raise ValueError(f"unknown family {self.family!r}")
            if self.n is None:
                raise ValueError("--n is required with --family")
            if self.family == "random":
                if self.p is None or self.seed is None:
                    raise ValueError("--p and --seed are required with --family random")
        if self.dynamics not in process.KINDS:
            raise ValueError(f"--dynamics must be one of {process.KINDS}")
        if self.eps_consensus <= 0 or self.eps_variance_drop <= 0:
            raise ValueError("eps values must be positive")
        if self.max_iters < 1:
            raise ValueError("--max-iters must be >= 1")
        if self.rtol <= 0:
            raise ValueError("--rtol must be positive")

    def build_graph(self) -> Graph:
        if self.edges is not None:
            return read_edge_list(self.edges)
        if self.family == "random":
            return random_connected_graph(self.n, self.p, self.seed)
        return _FAMILIES[self.family](self.n)

    def build_model(self, n: int) -> SignalModel:
        spec = self.sigma0
        if spec == "identity":
            return SignalModel()
        if spec.startswith("diag:"):
            try:
                diag = [float(x) for x in spec[len("diag:") :].split(",")]
            except ValueError as exc:
                raise ValueError(f"bad diagonal list in --sigma0: {spec!r}") from exc
            if len(diag) != n:
                raise ValueError(f"--sigma0 diag lists {len(diag)} entries for n={n}")
            return SignalModel(sigma0=np.diag(diag))
        if spec.startswith("file:"):
            mat = np.loadtxt(spec[len("file:") :], dtype=np.float64)
            mat = np.atleast_2d(mat)
            return SignalModel(sigma0=mat)
        raise ValueError(f"--sigma0 must be identity, diag:<csv> or file:<path>, got {spec!r}")

    def stop(self) -> StopCriteria:
        return StopCriteria(
            eps_consensus=self.eps_consensus,
            eps_variance_drop=self.eps_variance_drop,
            max_iters=self.max_iters,
        )

    def graph_description(self) -> dict:
        if self.edges is not None:
            return {"edges": self.edges}
        d = {"family": self.family, "n": self.n}
        if self.family == "random":
            d["p"] = self.p
            d["seed"] = self.seed
        return d


_CONFIG_KEYS = {
    "family": str,
    "n": int,
    "p": float,
    "seed": int,
    "edges": str,
    "dynamics": str,
    "sigma0": str,
    "eps": float,
    "eps_consensus": float,
    "eps_variance_drop": float,
    "max_iters": int,
    "rtol": float,
    "centered": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "out": str,
    "sample_seeds": lambda s: [int(x) for x in s.split(",") if x.strip()],
    "plot": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def load_config_file(path: str) -> dict:
    """key=value lines; '#' comments; unknown keys are errors with line info."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                parsed = _CONFIG_KEYS[key](val)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
            if key == "eps":
                values["eps_consensus"] = parsed
                values["eps_variance_drop"] = parsed
            else:
                values[key] = parsed
    return values


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        for key, val in load_config_file(args.config).items():
            setattr(cfg, key, val)
    overrides = {
        "family": args.family,
        "n": args.n,
        "p": args.p,
        "seed": args.seed,
        "edges": args.edges,
        "dynamics": args.dynamics,
        "sigma0": args.sigma0,
        "max_iters": args.max_iters,
        "rtol": args.rtol,
        "out": args.out,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    if args.eps is not None:
        cfg.eps_consensus = args.eps
        cfg.eps_variance_drop = args.eps
    if args.centered:
        cfg.centered = True
    if args.plot is not None:
        cfg.plot = args.plot
    if args.sample_seeds:
        cfg.sample_seeds = [int(x) for x in args.sample_seeds.split(",") if x.strip()]
    cfg.validate()
    return cfg


def _atomic_write(path: str, writer) -> None:
    tmp = path + ".tmp"
    writer(tmp)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict) -> None:
    def w(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_write(path, w)


def _dec(x) -> str:
    return format(float(x), ".17g")


def _rate_fields(trace) -> tuple[float | None, float | None]:
    try:
        factor = analysis.variance_gap_factor(trace)
    except InsufficientData:
        return None, None
    return float(np.sqrt(factor)), factor


def cmd_run(cfg: ExperimentConfig) -> int:
    g = cfg.build_graph()
    model = cfg.build_model(g.n)
    trace = process.run(
        cfg.dynamics, g, model, stop=cfg.stop(), rtol=cfg.rtol, centered=cfg.centered
    )
    rate, factor = _rate_fields(trace)
    trace.rate_estimate = rate
    os.makedirs(cfg.out, exist_ok=True)
    _atomic_write(os.path.join(cfg.out, "trace.csv"), trace.write_csv)
    summary = trace.summary_dict()
    summary["graph"] = cfg.graph_description()
    summary["sigma0"] = cfg.sigma0
    summary["centered"] = cfg.centered
    summary["rtol"] = cfg.rtol
    summary["variance_gap_factor"] = factor
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    if cfg.sample_seeds:
        final = process.EstimatorState(t=trace.iterations, M=trace.final_coefficients)
        lines = ["seed," + ",".join(f"x_{v}" for v in range(g.n))]
        for seed in cfg.sample_seeds:
            xs = process.sample_realization(final, model, seed)
            lines.append(str(seed) + "," + ",".join(_dec(x) for x in xs))

        def w(tmp):
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")

        _atomic_write(os.path.join(cfg.out, "realizations.csv"), w)
    if cfg.plot:
        plots.variance_decay_figure(trace, os.path.join(cfg.out, "trace.png"))
    return EXIT_OK if trace.converged else EXIT_UNDETERMINED


def cmd_analyze(cfg: ExperimentConfig) -> int:
    g = cfg.build_graph()
    model = cfg.build_model(g.n)
    trace = process.run(
        "ml", g, model, stop=cfg.stop(), rtol=cfg.rtol, centered=cfg.centered
    )
    if not trace.converged:
        print("analyze: ml run undetermined (hit max_iters)", file=sys.stderr)
        return EXIT_UNDETERMINED
    rate, factor = _rate_fields(trace)
    _, global_variance = process.global_mle_weights(g, model, cfg.rtol)
    report = {
        "n": g.n,
        "graph": cfg.graph_description(),
        "iterations": trace.iterations,
        "limit_weights": [float(x) for x in trace.limit_weights],
        "limit_variance": float(trace.limit_variance),
        "global_mle_variance": float(global_variance),
        "price_of_anarchy": float(trace.limit_variance / global_variance),
        "rate_estimate": rate,
        "variance_gap_factor": factor,
        "profile_fit": None,
    }
    fit = None
    order = path_order(g)
    if order is not None and g.n % 2 == 0 and g.n >= 4:
        fit = analysis.gaussian_profile_fit(trace.limit_weights[order])
        report["profile_fit"] = {
            "amplitude": fit.amplitude,
            "nu": fit.nu,
            "residual": fit.residual,
        }
    memory_trace = process.run(
        "ml_memory", g, model, stop=cfg.stop(), rtol=cfg.rtol, centered=cfg.centered
    )
    report["memory"] = {
        "converged": memory_trace.converged,
        "iterations": memory_trace.iterations,
        "vertex_count": g.n,
        "limit_variance": float(memory_trace.limit_variance),
    }
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "report.json"), report)
    if cfg.plot:
        plots.variance_decay_figure(trace, os.path.join(cfg.out, "analyze_trace.png"))
        profile_weights = trace.limit_weights if order is None else trace.limit_weights[order]
        plots.weight_profile_figure(
            profile_weights, os.path.join(cfg.out, "profile.png"), fit=fit
        )
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    g = cfg.build_graph()
    model = cfg.build_model(g.n)
    rows = []
    status = EXIT_OK
    for kind in ("ml", "averaging"):
        trace = process.run(
            kind, g, model, stop=cfg.stop(), rtol=cfg.rtol, centered=cfg.centered
        )
        rate, _ = _rate_fields(trace)
        rows.append(
            {
                "dynamics": kind,
                "limit_variance": float(trace.limit_variance),
                "iterations": trace.iterations,
                "rate_estimate": rate,
                "converged": trace.converged,
            }
        )
        if not trace.converged:
            status = EXIT_UNDETERMINED
    _, gvar = process.global_mle_weights(g, model, cfg.rtol)
    rows.append(
        {
            "dynamics": "global_mle",
            "limit_variance": float(gvar),
            "iterations": 0,
            "rate_estimate": None,
            "converged": True,
        }
    )
    os.makedirs(cfg.out, exist_ok=True)

    def wcsv(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("dynamics,limit_variance,iterations,rate_estimate,converged\n")
            for r in rows:
                rate = "" if r["rate_estimate"] is None else _dec(r["rate_estimate"])
                fh.write(
                    f"{r['dynamics']},{_dec(r['limit_variance'])},{r['iterations']},"
                    f"{rate},{str(r['converged']).lower()}\n"
                )

    _atomic_write(os.path.join(cfg.out, "compare.csv"), wcsv)

    def wtxt(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(f"{'dynamics':<12}{'limit variance':>22}{'iters':>8}{'rate':>12}\n")
            for r in rows:
                rate = "-" if r["rate_estimate"] is None else f"{r['rate_estimate']:.6f}"
                fh.write(
                    f"{r['dynamics']:<12}{r['limit_variance']:>22.15f}"
                    f"{r['iterations']:>8}{rate:>12}\n"
                )

    _atomic_write(os.path.join(cfg.out, "compare.txt"), wtxt)
    if cfg.plot:
        plots.comparison_figure(rows, os.path.join(cfg.out, "compare.png"))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netmle",
        description="Simulate and analyze iterative minimum-variance estimation on graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("analyze", cmd_analyze), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        p.set_defaults(handler=fn)
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--family", choices=[*_FAMILIES, "random"])
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=float, help="edge probability for --family random")
        p.add_argument("--seed", type=int, help="seed for --family random")
        p.add_argument("--edges", help="edge-list file: one 'u v' pair per line")
        p.add_argument("--dynamics", choices=list(process.KINDS))
        p.add_argument("--sigma0", help="identity | diag:<csv> | file:<path>")
        p.add_argument("--eps", type=float, help="sets both convergence epsilons")
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--rtol", type=float)
        p.add_argument("--centered", action="store_true", default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--sample-seeds",
            dest="sample_seeds",
            help="comma-separated seeds; run also writes realizations.csv",
        )
        p.add_argument("--plot", dest="plot", action="store_true", default=None)
        p.add_argument("--no-plot", dest="plot", action="store_false")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.handler(cfg)
    except Undetermined as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDETERMINED
    except (NetmleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
