"""Command-line interface: ``netform <command> ...``.

Exit codes: 0 success, 2 configuration or argument error, 3 size-limit error,
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import ArgumentError, ConfigError, DegenerateParameterError, NetformError, SizeLimitError
from .graph import Network, format_edgelist, read_edgelist, stats

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_SIZE = 0, 1, 2, 3


# -- output helpers --------------------------------------------------------------------


def sig6(x):
    """Round floats to 6 significant digits, recursively; other values pass through."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, Fraction):
        x = float(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.6g}")
    if isinstance(x, dict):
        return {str(k): sig6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sig6(v) for v in x]
    if hasattr(x, "item"):  # numpy scalars
        return sig6(x.item())
    return x


def dumps(obj):
    return json.dumps(sig6(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list
    version: str = __version__
    outputs: list = field(default_factory=list)
    wall_clock_s: float | None = None

    def reproducible(self):
        """Everything except timing, so outputs embedding it stay byte-identical on rerun."""
        return {"command": self.command, "config": self.config, "seeds": self.seeds,
                "version": self.version}

    def to_json(self):
        out = self.reproducible()
        out.update(outputs=self.outputs, wall_clock_s=self.wall_clock_s)
        return out


def thread_count():
    raw = os.environ.get("NETFORM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"NETFORM_THREADS must be an integer, got {raw!r}") from None


def parse_seeds(text):
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m:
        raise ArgumentError(f"--seeds expects 'a..b', got {text!r}")
    a, b = int(m.group(1)), int(m.group(2))
    if b < a:
        raise ArgumentError(f"--seeds range {text!r} is empty")
    return list(range(a, b + 1))


def _number(x, exact=False):
    if exact:
        return Fraction(str(x))
    return x


# -- config parsing --------------------------------------------------------------------


class _Config:
    """JSON config with line-anchored error messages."""

    def __init__(self, path):
        self.path = str(path)
        try:
            self.text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
        try:
            self.data = json.loads(self.text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
        if not isinstance(self.data, dict):
            raise ConfigError(f"{path}:1: top level must be a JSON object")

    def line_of(self, key):
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else 1

    def error(self, key, msg):
        return ConfigError(f"{self.path}:{self.line_of(key)}: {key}: {msg}")

    def get(self, key, default=None, kind=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.path}:1: missing required key {key!r}")
            return default
        v = self.data[key]
        if kind is not None and not isinstance(v, kind):
            names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            raise self.error(key, f"expected {names}, got {type(v).__name__}")
        return v

    def wrap(self, key, fn):
        try:
            return fn()
        except (ConfigError, ArgumentError, ValueError, TypeError) as e:
            raise self.error(key, str(e)) from None


def _types_from(cfg):
    from .payoff import TypeVector

    if "types" in cfg.data:
        types = cfg.get("types", kind=list)
        return cfg.wrap("types", lambda: TypeVector(tuple(types)))
    counts = cfg.get("type_counts", kind=list)
    if counts is None:
        n = cfg.get("n", kind=int, required=True)
        return TypeVector((0,) * n)
    labels = cfg.get("labels", kind=list)
    return cfg.wrap("type_counts", lambda: TypeVector.from_counts(counts, labels))


def _model_from(cfg, types):
    from .payoff import ConnectionsModel, PayoffParams, example1_model

    pay = cfg.get("payoff", kind=dict, required=True)
    if "table" in pay:
        if pay["table"] != "example1":
            raise cfg.error("table", f"unknown payoff table {pay['table']!r}")
        return None, example1_model(pay.get("v", 1))
    f = pay.get("f")
    if isinstance(f, (int, float)):
        f = {t: f for t in types.type_set}
    if not isinstance(f, dict):
        raise cfg.error("payoff", "f must be a number or a map from type to benefit")
    lookup = {str(k): v for k, v in f.items()}
    try:
        fmap = {t: lookup[str(t)] for t in types.type_set}
    except KeyError as e:
        raise cfg.error("payoff", f"no benefit given for type {e.args[0]!r}") from None
    params = cfg.wrap("payoff", lambda: PayoffParams(fmap, pay.get("c"), pay.get("delta")))
    return params, ConnectionsModel(params)


def _links(cfg, key, n, value, types=None, params=None):
    if value == "empty":
        return Network.empty(n)
    if value == "complete":
        return Network.complete(n)
    if value == "efficient":
        from .efficiency import efficient_core_periphery

        if params is None:
            raise cfg.error(key, "'efficient' needs a connections-model payoff")
        return cfg.wrap(key, lambda: efficient_core_periphery(types, params).network)
    if not isinstance(value, list):
        raise cfg.error(key, "expected a list of [i, j] links, 'empty', 'complete' or 'efficient'")
    return cfg.wrap(key, lambda: Network(n, [tuple(l) for l in value]))


# -- simulate --------------------------------------------------------------------------


def _seeds(args, cfg):
    if args.seeds:
        return parse_seeds(args.seeds)
    if args.seed is not None:
        return [args.seed]
    seed = cfg.get("seed", kind=int)
    if seed is None:
        raise ConfigError(f"{cfg.path}:1: missing required key 'seed' (or pass --seed/--seeds)")
    return [seed]


def _simulate_one(mode, cfg, args, seed):
    """Returns (summary dict, {filename: text}) for one seed."""
    from dataclasses import replace

    if mode == "myopic":
        from .baseline import MyopicConfig, myopic_run
        from .payoff import PayoffParams

        types = _types_from(cfg)
        params, _ = _model_from(cfg, types)
        if params is None:
            raise cfg.error("payoff", "myopic runs need a connections-model payoff")
        labels = sorted(types.type_set, key=repr)
        counts = [types.types.count(t) for t in labels]
        if list(types.types) != [t for t, k in zip(labels, counts) for _ in range(k)]:
            raise cfg.error("types", "myopic runs need agents grouped by type (use type_counts)")
        mc = cfg.wrap("horizon", lambda: MyopicConfig(
            params, tuple(counts), tuple(labels), horizon=args.horizon or cfg.get("horizon", kind=int),
            seed=seed, initial=cfg.get("initial", "complete"),
            discount_direct=bool(cfg.get("discount_direct", False)),
        ))
        res = myopic_run(mc)
        summary = res.summary()
        return summary, {f"network_seed{seed}.edges": format_edgelist(res.network)}

    from .game import SimConfig, load_injections, run

    types = _types_from(cfg)
    n = len(types)
    params, model = _model_from(cfg, types)
    inj_text = None
    if args.injections:
        inj_text = Path(args.injections).read_text()
    elif "injections" in cfg.data:
        inj_text = json.dumps(cfg.data["injections"])
    injections = cfg.wrap("injections", lambda: load_injections(inj_text)) if inj_text else []
    initial = _links(cfg, "initial", n, cfg.get("initial", "empty"))
    common = dict(
        gamma=cfg.get("gamma", 0.9), K=cfg.get("K", 1), J=cfg.get("J", 1),
        epsilon=args.epsilon if args.epsilon is not None else cfg.get("epsilon", 0.0),
        seed=seed, initial_network=initial, horizon=args.horizon or cfg.get("horizon", 1000),
    )
    if mode == "incomplete":
        from .incomplete import run_ic, star_or_wheel_plan

        plan_name = cfg.get("plan", "star-or-wheel")
        if plan_name != "star-or-wheel":
            raise cfg.error("plan", f"unknown plan {plan_name!r}")
        if params is None:
            raise cfg.error("payoff", "incomplete-information runs need a connections-model payoff")
        plan = star_or_wheel_plan(cfg.get("alpha", "alpha"))
        sc = cfg.wrap("gamma", lambda: SimConfig(n, plan, **common))
        trace = run_ic(sc, types, params, injections=injections)
    else:
        target = _links(cfg, "target", n, cfg.get("target", "complete"), types, params)
        sc = cfg.wrap("gamma", lambda: SimConfig(n, target, **common))
        trace = run(sc, injections=injections)
    summary = trace.summary()
    return summary, {f"trace_seed{seed}.csv": trace.to_csv()}


def cmd_simulate(args):
    cfg = _Config(args.config)
    mode = args.mode or cfg.get("mode", "foresighted")
    if mode not in ("foresighted", "myopic", "incomplete"):
        raise ConfigError(f"{cfg.path}:{cfg.line_of('mode')}: mode: unknown mode {mode!r}")
    seeds = _seeds(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("simulate", dict(cfg.data, mode=mode), seeds)
    start = time.perf_counter()
    threads = min(thread_count(), len(seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _simulate_one(mode, cfg, args, s), seeds))
    else:
        results = [_simulate_one(mode, cfg, args, s) for s in seeds]
    per_seed = {}
    for seed, (summary, files) in zip(seeds, results):
        for name, text in files.items():
            (out / name).write_text(text)
            manifest.outputs.append(str(out / name))
        name = f"summary_seed{seed}.json"
        (out / name).write_text(dumps({"manifest": manifest.reproducible(), "seed": seed, **summary}))
        manifest.outputs.append(str(out / name))
        per_seed[str(seed)] = summary
    merged = {"manifest": manifest.reproducible(), "runs": per_seed}
    if mode == "myopic" and len(seeds) > 1:
        import numpy as np

        keys = ("alcc", "gcc", "diameter", "p90_distance")
        table = np.array([[per_seed[str(s)][k] for k in keys] for s in seeds], dtype=float)
        merged["mean"] = dict(zip(keys, table.mean(axis=0).tolist()))
        merged["stderr"] = dict(zip(keys, (table.std(axis=0, ddof=1) / np.sqrt(len(seeds))).tolist()))
    (out / "summary.json").write_text(dumps(merged))
    manifest.outputs.append(str(out / "summary.json"))
    manifest.wall_clock_s = time.perf_counter() - start
    (out / "manifest.json").write_text(dumps(manifest.to_json()))
    if len(seeds) == 1:
        sys.stdout.write(dumps(per_seed[str(seeds[0])]))
    else:
        sys.stdout.write(dumps({k: v for k, v in merged.items() if k != "manifest"}))
    return EXIT_OK


# -- efficient / stability -------------------------------------------------------------------


def _two_type_spec(args):
    from .efficiency import TwoTypeSpec

    missing = [k for k in ("f_alpha", "f_beta", "c", "delta", "na", "nb") if getattr(args, k) is None]
    if missing:
        raise ArgumentError("--two-type needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    ex = args.exact
    return TwoTypeSpec(_number(args.f_alpha, ex), _number(args.f_beta, ex), args.na, args.nb,
                       _number(args.c, ex), _number(args.delta, ex))


def _general_setup(args):
    if not args.config:
        raise ArgumentError("pass --two-type with its parameters, or --config")
    cfg = _Config(args.config)
    types = _types_from(cfg)
    params, model = _model_from(cfg, types)
    return cfg, types, params, model


def cmd_efficient(args):
    from .efficiency import brute_force_efficient, efficient_core_periphery, efficient_two_type

    if args.two_type:
        spec = _two_type_spec(args)
        types, model = spec.types(), spec.model()
        result = efficient_two_type(spec)
    else:
        _, types, params, model = _general_setup(args)
        if params is None:
            raise ConfigError("the core-periphery construction needs a connections-model payoff")
        result = efficient_core_periphery(types, params)
    report = result.to_json()
    if args.brute_force:
        winners, best = brute_force_efficient(types, model)
        report["brute_force"] = {"welfare": best, "matches": result.network in winners,
                                 "maximizers": len(winners)}
    if args.stats:
        report["stats"] = stats(result.network).as_dict()
    if args.edges:
        Path(args.edges).write_text(format_edgelist(result.network))
    sys.stdout.write(dumps(report))
    return EXIT_OK


def cmd_stability(args):
    from .efficiency import core_stable_conditions, efficient_two_type, is_core_stable

    report = {}
    if args.two_type:
        spec = _two_type_spec(args)
        types, model = spec.types(), spec.model()
        g = efficient_two_type(spec).network if not args.edges else read_edgelist(args.edges, spec.n)
        if not args.edges:
            report["closed_form"] = bool(core_stable_conditions(spec))
    else:
        _, types, _, model = _general_setup(args)
        if not args.edges:
            raise ArgumentError("--config needs --edges with the network to test")
        g = read_edgelist(args.edges, len(types))
    verdict = is_core_stable(g, types, model)
    report.update(
        stable=verdict.stable,
        blocking_coalition=sorted(verdict.coalition),
        blocking_network=[list(l) for l in verdict.network.edge_list()] if verdict.network else None,
        links=[list(l) for l in g.edge_list()],
    )
    sys.stdout.write(dumps(report))
    return EXIT_OK


# -- equilibrium -------------------------------------------------------------------------------


def cmd_equilibrium(args):
    from . import equilibrium as eq
    from .payoff import example1_model

    if args.example1:
        types, model, target = (0, 0, 0), example1_model(args.v), Network.complete(3)
    else:
        cfg, types, _, model = _general_setup(args)
        target = _links(cfg, "target", len(types), cfg.get("target", "complete"))
        types = types.types
    if not 0 < args.gamma < 1:
        raise ArgumentError(f"--gamma must lie in (0,1), got {args.gamma}")
    chain = eq.build_chain(target, types, model, args.K)
    dev = eq.deviation_gain(chain, args.gamma)
    report = {
        "gamma": args.gamma,
        "K": args.K,
        "equilibrium": dev.equilibrium,
        "max_gain": dev.gain,
        "deviation": None if dev.state is None else {
            "agent": dev.agent,
            "links": [list(l) for l in dev.state[0].edge_list()],
            "phase": "C" if dev.state[1] == 0 else f"P{dev.state[1] - 1}",
        },
        "target": [list(l) for l in target.edge_list()],
    }
    bounds = eq.bound_components(target, types, model)
    report["bound"] = {
        "certifies": bounds.certifies(args.gamma, args.K),
        "slack": bounds.slack(args.gamma, args.K),
        "v_bar": bounds.v_bar, "W": bounds.W, "A": bounds.A, "t_star": bounds.t_star,
    }
    if args.threshold:
        report["threshold"] = eq.threshold_gamma(target, types, model, args.K, chain=chain).to_json()
    if args.min_k:
        report["min_K"] = eq.min_K(target, types, model, args.gamma, K_max=args.k_max)
    sys.stdout.write(dumps(report))
    return EXIT_OK


# -- stats ---------------------------------------------------------------------------------------


def cmd_stats(args):
    g = read_edgelist(args.edges, args.n)
    report = stats(g).as_dict()
    report.update(n=g.n, links=len(g))
    sys.stdout.write(dumps(report))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="netform", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"netform {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the formation process from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=("foresighted", "myopic", "incomplete"))
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", help="inclusive range a..b, run concurrently")
    s.add_argument("--horizon", type=int)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--injections", help="JSON file of [t, agent, override] entries")
    s.add_argument("--out", default="netform_out")
    s.set_defaults(func=cmd_simulate)

    def two_type_args(q):
        q.add_argument("--two-type", action="store_true")
        q.add_argument("--f-alpha", type=float)
        q.add_argument("--f-beta", type=float)
        q.add_argument("--c", type=float)
        q.add_argument("--delta", type=float)
        q.add_argument("--na", type=int)
        q.add_argument("--nb", type=int)
        q.add_argument("--exact", action="store_true", help="use exact rational arithmetic")
        q.add_argument("--config")

    e = sub.add_parser("efficient", help="strongly efficient network")
    two_type_args(e)
    e.add_argument("--brute-force", action="store_true", help="cross-check by enumeration (N <= 6)")
    e.add_argument("--stats", action="store_true", help="add clustering and distance statistics")
    e.add_argument("--edges", help="write the network as an edge list")
    e.set_defaults(func=cmd_efficient)

    st = sub.add_parser("stability", help="core-stability verdict with a blocking witness")
    two_type_args(st)
    st.add_argument("--edges", help="edge list of the network to test")
    st.set_defaults(func=cmd_stability)

    q = sub.add_parser("equilibrium", help="exact one-shot deviation check of the target strategy")
    q.add_argument("--example1", action="store_true", help="three-agent table example")
    q.add_argument("--v", type=float, default=1.0)
    q.add_argument("--config")
    q.add_argument("--gamma", type=float, required=True)
    q.add_argument("--K", type=int, required=True)
    q.add_argument("--threshold", action="store_true", help="also search the discount threshold")
    q.add_argument("--min-k", action="store_true", help="also search the shortest punishment")
    q.add_argument("--k-max", type=int, default=200)
    q.set_defaults(func=cmd_equilibrium)

    t = sub.add_parser("stats", help="statistics of an edge-list file")
    t.add_argument("edges")
    t.add_argument("--n", type=int, help="number of agents (default: largest index + 1)")
    t.set_defaults(func=cmd_stats)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SizeLimitError as e:
        print(f"netform: error: {e}", file=sys.stderr)
        return EXIT_SIZE
    except (ConfigError, ArgumentError, DegenerateParameterError) as e:
        print(f"netform: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"netform: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NetformError as e:
        print(f"netform: error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - report and map to the internal-error code
        print(f"netform: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
