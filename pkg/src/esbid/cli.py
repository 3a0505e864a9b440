"""Command-line front end.

Commands: ``market``, ``optimize``, ``compare``, ``entropy-demo``,
``validate``. Run configurations are JSON documents; ``--seed``,
``--n-max``, ``--alpha`` and ``--out`` override the file. Diagnostics go
to stderr, results to files (and a short summary to stdout).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import entropy
from .entropy import EntropyConfig
from .errors import ConfigurationError, EsbidError, EvaluationError, InfeasibleError
from .kriging import KernelHyper
from .market import (
    Bid,
    bidding_objective,
    clear_market,
    instance_from_dict,
    load_instance,
    storage_profit,
    validate_instance,
)
from .optimizer import InnerSearchConfig, OptimizerConfig, relative_error, run_method
from .sampling import Bounds

log = logging.getLogger("esbid")

DEFAULT_ALPHA = 20000.0
STOCHASTIC = {"surrogate", "pattern", "ga", "random"}
ALL_METHODS = STOCHASTIC | {"enumerate"}

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3


def _fmt(v) -> str:
    return repr(float(v))


def _resolve_instance(ref: str, base: Path):
    """``bundled:<name>`` or a path relative to the config file."""
    if ref.startswith("bundled:"):
        from .market import bundled_instance

        return bundled_instance(ref.split(":", 1)[1])
    path = Path(ref)
    if not path.is_absolute():
        path = base / path
    return load_instance(path)


@dataclass
class RunConfig:
    instance: str
    method: str = "surrogate"
    methods: list[str] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    alpha: float = DEFAULT_ALPHA
    upsilon: list[float] = field(default_factory=lambda: [1.0])
    w: list[float] = field(default_factory=lambda: [1.5])
    n_init: int | None = None
    n_max: int = 100
    seed: int | None = None
    grid_points: int = 51
    output_dir: str = "out"
    record_timing: bool = True
    workers: int = 1
    inner: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    KEYS = (
        "instance", "method", "methods", "seeds", "alpha", "upsilon", "w", "n_init", "n_max",
        "seed", "grid_points", "output_dir", "record_timing", "workers", "inner",
    )

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: config must be a JSON object")
        unknown = sorted(set(doc) - set(cls.KEYS))
        if unknown:
            raise ConfigurationError(f"{path}: unknown config fields {unknown}")
        if "instance" not in doc:
            raise ConfigurationError(f"{path}: missing field 'instance'")
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        for key in ("upsilon", "w"):
            if key in doc and not isinstance(doc[key], list):
                doc[key] = [doc[key]]
        return cls(**doc, base_dir=path.parent)

    def hyper(self) -> KernelHyper:
        return KernelHyper(self.upsilon, self.w)

    def optimizer_config(self, seed: int | None = None) -> OptimizerConfig:
        seed = self.seed if seed is None else seed
        return OptimizerConfig(
            n_max=int(self.n_max),
            n_init=self.n_init,
            hyper=self.hyper(),
            entropy=EntropyConfig(alpha=float(self.alpha)),
            seed=0 if seed is None else int(seed),
            inner=InnerSearchConfig(**self.inner),
            grid_points=int(self.grid_points),
            workers=int(self.workers),
        )

    def check_method(self, method: str, seed) -> None:
        if method not in ALL_METHODS:
            raise ConfigurationError(f"unknown method {method!r}; choose from {sorted(ALL_METHODS)}")
        if method in STOCHASTIC and seed is None:
            raise ConfigurationError(f"method {method!r} needs a seed (config 'seed' or --seed)")
        if method == "surrogate":
            d = 2
            n_init = self.n_init if self.n_init is not None else max(2 * (d + 1), 10)
            if self.n_max < n_init:
                raise ConfigurationError(f"n_max={self.n_max} is smaller than n_init={n_init}")

    def output_path(self) -> Path:
        return Path(self.output_dir)


def _overrides(args) -> dict:
    return {
        "seed": getattr(args, "seed", None),
        "n_max": getattr(args, "n_max", None),
        "alpha": getattr(args, "alpha", None),
        "output_dir": getattr(args, "out", None),
        "method": getattr(args, "method", None),
    }


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def result_to_dict(result, instance) -> dict:
    return {
        "bid": {"e_m": result.bid.e_m, "p_m": result.bid.p_m},
        "total_cost": result.total_cost,
        "storage_profit": storage_profit(result, instance),
        "node_count": result.node_count,
        "p": result.p.tolist(),
        "pc": result.pc.tolist(),
        "pd": result.pd.tolist(),
        "zc": result.zc.tolist(),
        "zd": result.zd.tolist(),
        "y": result.y.tolist(),
        "theta": result.theta.tolist(),
        "lambda": result.lmp.tolist(),
    }


def cmd_market(args) -> int:
    instance = _resolve_instance(args.instance, Path("."))
    result = clear_market(instance, Bid(args.e_m, args.p_m))
    profit = storage_profit(result, instance)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "clearing.json", result_to_dict(result, instance))
    bus = instance.storage.bus
    with open(out / "clearing.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "pc", "pd", "y", "lambda_at_storage_bus"])
        for t in range(instance.horizon):
            # y is the state of charge at the end of period t
            w.writerow([t + 1, _fmt(result.pc[t]), _fmt(result.pd[t]), _fmt(result.y[t + 1]),
                        _fmt(result.lmp[bus, t])])
    print(f"total_cost {result.total_cost:.2f}")
    print(f"profit {profit:.2f}")
    return EXIT_OK


def _run_one(cfg: RunConfig, objective, method: str, seed):
    t0 = time.perf_counter()
    x, f, trace = run_method(method, objective, cfg.optimizer_config(seed))
    return x, f, trace, (time.perf_counter() - t0) * 1e3


def cmd_optimize(args) -> int:
    cfg = RunConfig.load(args.config, _overrides(args))
    cfg.check_method(cfg.method, cfg.seed)
    instance = _resolve_instance(cfg.instance, cfg.base_dir)
    objective = bidding_objective(instance)
    x, f, trace, ms = _run_one(cfg, objective, cfg.method, cfg.seed)
    out = cfg.output_path()
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv", timing=cfg.record_timing)
    summary = {
        "method": cfg.method,
        "seed": cfg.seed,
        "best_bid": {"e_m": float(x[0]), "p_m": float(x[1])},
        "best_profit": -f,
        "best_f": f,
        "evaluations": len(trace),
        "wall_time_s": ms / 1e3,
    }
    _write_json(out / "summary.json", summary)
    print(f"best bid e_m={x[0]:.4f} p_m={x[1]:.4f} profit={-f:.4f} ({len(trace)} evaluations)")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = RunConfig.load(args.config, _overrides(args))
    methods = cfg.methods or [cfg.method]
    seeds = cfg.seeds or ([cfg.seed] if cfg.seed is not None else [])
    if len(methods) < 2:
        raise ConfigurationError("compare needs at least two methods in 'methods'")
    if not seeds:
        raise ConfigurationError("compare needs a non-empty 'seeds' list")
    for m in methods:
        if m == "enumerate":
            raise ConfigurationError("'enumerate' is the reference; do not list it in 'methods'")
        cfg.check_method(m, seeds[0])
    instance = _resolve_instance(cfg.instance, cfg.base_dir)
    objective = bidding_objective(instance)

    out = cfg.output_path()
    (out / "traces").mkdir(parents=True, exist_ok=True)
    log.info("enumerating %d x %d grid", cfg.grid_points, cfg.grid_points)
    x_ref, f_ref, ref_trace, ref_ms = _run_one(cfg, objective, "enumerate", None)
    ref_trace.to_csv(out / "traces" / "enumerate.csv", timing=cfg.record_timing)

    cells = [(m, s) for m in methods for s in seeds]

    def run_cell(cell):
        m, s = cell
        log.info("running %s seed %s", m, s)
        return _run_one(cfg, objective, m, s)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]

    rows = [["enumerate", "", _fmt(f_ref), _fmt(0.0), len(ref_trace), _fmt(ref_ms if cfg.record_timing else 0)]]
    for (m, s), (x, f, trace, ms) in zip(cells, results):
        trace.to_csv(out / "traces" / f"{m}_{s}.csv", timing=cfg.record_timing)
        rows.append([m, s, _fmt(f), _fmt(relative_error(f, f_ref)), len(trace),
                     _fmt(ms if cfg.record_timing else 0)])
    with open(out / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "seed", "best_f", "rel_error", "evals", "ms"])
        w.writerows(rows)
    for m in methods:
        errs = [relative_error(r[1], f_ref) for (mm, _), r in zip(cells, results) if mm == m]
        print(f"{m}: median rel_error {np.median(errs):.4%}, max {np.max(errs):.4%}")
    return EXIT_OK


def cmd_entropy_demo(args) -> int:
    points = np.array(args.points if args.points else [0.1, 0.3, 0.7, 0.8], dtype=float)
    bounds = Bounds([0.0], [1.0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pts = points.reshape(-1, 1)
    grid = np.linspace(0.0, 1.0, 1001)
    inc = entropy._xlogx_neg(entropy.beta_many(grid[:, None], pts))
    with open(out / "entropy_grid.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "delta_h"])
        for x, v in zip(grid, inc):
            w.writerow([_fmt(x), _fmt(v)])

    n = len(pts)
    orders = [("natural", list(range(n))), ("greedy", entropy.greedy_order(pts, bounds)),
              ("reverse", list(range(n))[::-1])]
    if n <= 6:
        orders += [("perm:" + "-".join(map(str, p)), list(p)) for p in itertools.permutations(range(n))]
    with open(out / "orderings.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ordering", "step", "point", "cumulative"])
        for label, order in orders:
            cum = entropy.cumulative_entropy(pts[order], bounds)
            for k, (i, c) in enumerate(zip(order, cum)):
                w.writerow([label, k + 1, _fmt(points[i]), _fmt(c)])
    greedy_total = entropy.cumulative_entropy(pts[orders[1][1]], bounds)[-1]
    print(f"greedy order {orders[1][1]} total {greedy_total:.6f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.instance)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    instance, horizon = instance_from_dict(doc, path.stem)
    problems = validate_instance(instance, horizon)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esbid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("market", help="clear the market for one bid")
    p.add_argument("instance", help="instance JSON path or bundled:<name>")
    p.add_argument("e_m", type=float, help="bid energy capacity (MWh)")
    p.add_argument("p_m", type=float, help="bid power rate (MW)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_market)

    for name, func, text in (
        ("optimize", cmd_optimize, "optimize the storage bid with one method"),
        ("compare", cmd_compare, "compare methods against grid enumeration"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-max", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--out")
        if name == "optimize":
            p.add_argument("--method", choices=sorted(ALL_METHODS))
        p.set_defaults(func=func)

    p = sub.add_parser("entropy-demo", help="write entropy increment and ordering tables")
    p.add_argument("--out", default="out")
    p.add_argument("--points", type=float, nargs="+")
    p.set_defaults(func=cmd_entropy_demo)

    p = sub.add_parser("validate", help="check an instance file")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if isinstance(exc.__cause__, InfeasibleError) else EXIT_ERROR
    except (EsbidError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
