"""Command-line front end: ``imrm synth | fit | eval | stats``.

Every subcommand takes ``--config FILE`` with ``key = value`` lines whose
keys are the long flag names (dashes or underscores).  Flags given on the
command line win over the file, which wins over the built-in defaults.

Exit codes: 0 success, 2 usage, 3 I/O, 4 numerical-invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evalkit
from .latent import Hyper, HMCConfig, StateError
from .netgraph import EdgeListError, SplitError, format_edge_list, holdout_split, read_edge_list, stats_json
from .samplers.chain import ConfigError, load_state, run_chain, save_state
from .synthgen import ParamError, gen_multi, gen_single

log = logging.getLogger("imrm")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Fully resolved settings of one invocation."""

    command: str
    options: dict = field(default_factory=dict)

    def hyper(self) -> Hyper:
        o = self.options
        return Hyper(
            alpha=o["alpha"], a_within=o["a_within"], a_between=o["a_between"],
            b_within=o["b_within"], b_between=o["b_between"],
            hmc=HMCConfig(leapfrog_steps=o["leapfrog_steps"], step_size=o["step_size"]),
            t_restricted_scans=o["t_scans"], split_var_power=o["split_var_power"],
            iterations=o["iters"], k_init=o["k_init"], split_merge_per_iter=o["sm_per_iter"],
            k_max=o["k_max"], burn_in=o["burn_in"], thin=o["thin"])


# parsing -----------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def _sampler_flags(p: argparse.ArgumentParser) -> None:
    d = Hyper()
    g = p.add_argument_group("sampler")
    g.add_argument("--iters", type=int, default=d.iterations, help="sampling iterations")
    g.add_argument("--k-init", type=int, default=d.k_init, help="initial number of classes")
    g.add_argument("--k-max", type=int, default=None, help="cap on the number of features")
    g.add_argument("--alpha", type=float, default=None, help="IBP/CRP concentration (default log N)")
    g.add_argument("--a-within", type=float, default=d.a_within)
    g.add_argument("--b-within", type=float, default=d.b_within)
    g.add_argument("--a-between", type=float, default=d.a_between)
    g.add_argument("--b-between", type=float, default=d.b_between)
    g.add_argument("--leapfrog-steps", type=int, default=d.hmc.leapfrog_steps)
    g.add_argument("--step-size", type=float, default=d.hmc.step_size, help="initial HMC step size")
    g.add_argument("--t-scans", type=int, default=d.t_restricted_scans, help="restricted scans per split-merge")
    g.add_argument("--sm-per-iter", type=int, default=d.split_merge_per_iter)
    g.add_argument("--split-var-power", type=float, default=d.split_var_power)
    g.add_argument("--burn-in", type=float, default=d.burn_in, help="fraction of iterations discarded")
    g.add_argument("--thin", type=int, default=d.thin)
    g.add_argument("--seed", type=int, default=0, help="chain seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imrm", description="Infinite multiple-membership relational models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic network with ground truth")
    p.add_argument("--config")
    p.add_argument("--family", help="hw, db, rm, mhw, mdb or mrm")
    p.add_argument("--k", type=int, help="number of (base) classes")
    p.add_argument("--size", type=int, default=50, help="vertices per class")
    p.add_argument("--rho-c", type=_floats, default=None, help="within-class probability (DB: one per class)")
    p.add_argument("--rho-0", type=float, default=0.0, help="between-class probability")
    p.add_argument("--rho-file", help="whitespace matrix of link probabilities (RM)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth", help="output prefix")

    p = sub.add_parser("fit", help="run one chain per split seed")
    p.add_argument("--config")
    p.add_argument("--input", help="edge list")
    p.add_argument("--model", default="IMRM", help="IMHW, IMDB, IMRM, IHW, IDB or IRM")
    p.add_argument("--holdout", type=float, default=None, help="hold-out fraction of links")
    p.add_argument("--split-seeds", type=_ints, default=None, help="comma-separated split seeds")
    p.add_argument("--resume", help="state file written by an earlier fit")
    p.add_argument("--workers", type=int, default=1, help="chains run concurrently")
    p.add_argument("--timing", action="store_true", help="record wall time in the trace")
    p.add_argument("--out", default="fit", help="output prefix")
    _sampler_flags(p)

    p = sub.add_parser("eval", help="score held-out dyads for models and baselines")
    p.add_argument("--config")
    p.add_argument("--input", help="edge list")
    p.add_argument("--holdout", type=float, default=0.025)
    p.add_argument("--splits", type=int, default=5)
    p.add_argument("--split-seed", type=int, default=0, help="first split seed")
    p.add_argument("--baselines", default="", help="'all' or comma-separated subset of " + ",".join(evalkit.BASELINES))
    p.add_argument("--models", default="", help="models to fit inline, comma-separated")
    p.add_argument("--snapshots", nargs="*", default=[], help="snapshot files written by fit")
    p.add_argument("--out", default="eval", help="output prefix")
    _sampler_flags(p)

    p = sub.add_parser("stats", help="descriptive network statistics as JSON")
    p.add_argument("--config")
    p.add_argument("--input", help="edge list")
    return parser


def read_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def parse(argv) -> RunConfig:
    """Two-pass parse so that flags override the config file."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions}
        conf = read_config(args.config)
        unknown = sorted(set(conf) - known - {"config"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        store_true = {a.dest for a in sp._actions if isinstance(a, argparse._StoreTrueAction)}
        for key, value in conf.items():
            if key in store_true:
                conf[key] = value.lower() in ("1", "true", "yes", "on")
        sp.set_defaults(**conf)
        args = parser.parse_args(argv)
    opts = vars(args)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    return RunConfig(opts.pop("command"), opts)


# commands -------------------------------------------------------------------------


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_synth(cfg: RunConfig) -> int:
    o = cfg.options
    if not o["family"]:
        raise UsageError("synth needs --family")
    if o["k"] is None:
        raise UsageError("synth needs --k")
    family = o["family"].upper()
    rho = None
    if o["rho_file"]:
        rho = np.loadtxt(o["rho_file"], ndmin=2)
    rho_c = o["rho_c"]
    if family.removeprefix("M") == "HW" and rho_c is not None and len(rho_c) != 1:
        raise UsageError("HW takes a single --rho-c")
    if family.removeprefix("M") == "RM" and rho_c is not None:
        raise UsageError("RM takes --rho-file, not --rho-c")
    gen = gen_multi if family.startswith("M") else gen_single
    g, truth = gen(family, o["k"], o["size"], rho_c=rho_c, rho_0=o["rho_0"], rho=rho, seed=o["seed"])
    out = Path(o["out"])
    _write(out.with_name(out.name + ".edges"), format_edge_list(g))
    _write(out.with_name(out.name + ".truth.csv"), truth.to_csv())
    if truth.collapsed:
        log.info("%d vertices have both memberships in one class", truth.collapsed)
    return EXIT_OK


def _read_graph(path):
    if not path:
        raise UsageError("--input is required")
    return read_edge_list(path)


def _run_one(job):
    """Worker for one chain; returns the files to write."""
    g, model, hyper, seed, split_seed, fraction, state, start, prefix, timing = job
    res = run_chain(g, model, hyper, seed, state=state, start_iteration=start)
    meta = {"split_seed": split_seed, "holdout": fraction}
    return {
        prefix + ".trace.csv": res.trace_csv(timing),
        prefix + ".snapshots.json": res.snapshots_json(meta),
        prefix + ".state.json": save_state(res.state, hyper.iterations),
    }


def cmd_fit(cfg: RunConfig) -> int:
    o = cfg.options
    g = _read_graph(o["input"])
    hyper = cfg.hyper()
    model = o["model"].upper()
    out = o["out"]
    seeds = o["split_seeds"] or []
    if seeds and o["holdout"] is None:
        raise UsageError("--split-seeds needs --holdout")
    if o["holdout"] is not None and not seeds:
        seeds = [0]
    jobs = []
    if o["resume"]:
        if len(seeds) > 1:
            raise UsageError("--resume continues a single chain")
        split = seeds[0] if seeds else None
        train = holdout_split(g, o["holdout"], split)[0] if split is not None else g
        with open(o["resume"]) as fh:
            state, start = load_state(fh.read(), train, hyper)
        if start >= hyper.iterations:
            raise UsageError(f"state is at iteration {start}; --iters must exceed it")
        prefix = out if split is None else f"{out}.split{split}"
        jobs.append((train, model, hyper, o["seed"], split, o["holdout"], state, start, prefix, o["timing"]))
    elif not seeds:
        jobs.append((g, model, hyper, o["seed"], None, None, None, 0, out, o["timing"]))
    else:
        for s in seeds:
            train, _ = holdout_split(g, o["holdout"], s)
            jobs.append((train, model, hyper, o["seed"], s, o["holdout"], None, 0, f"{out}.split{s}", o["timing"]))
    if o["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=o["workers"]) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    for files in results:
        for path, text in files.items():
            _write(Path(path), text)
    return EXIT_OK


def _baseline_kinds(text: str) -> list[str]:
    if not text:
        return []
    if text.strip().lower() == "all":
        return list(evalkit.BASELINES)
    lookup = {b.lower(): b for b in evalkit.BASELINES}
    kinds = []
    for name in text.split(","):
        key = name.strip().lower()
        if key not in lookup:
            raise UsageError(f"unknown baseline {name!r}; choose from {', '.join(evalkit.BASELINES)}")
        kinds.append(lookup[key])
    return kinds


def _load_snapshot_file(path: str):
    from .samplers.chain import Snapshot
    with open(path) as fh:
        d = json.load(fh)
    return d, [Snapshot.from_dict(s) for s in d["snapshots"]]


def cmd_eval(cfg: RunConfig) -> int:
    o = cfg.options
    g = _read_graph(o["input"])
    kinds = _baseline_kinds(o["baselines"])
    models = [m.strip().upper() for m in o["models"].split(",") if m.strip()]
    hyper = cfg.hyper() if models else None
    seeds = [o["split_seed"] + s for s in range(o["splits"])]

    by_split: dict[int, list] = {s: [] for s in seeds}
    for path in o["snapshots"]:
        d, snaps = _load_snapshot_file(path)
        split = d.get("split_seed")
        if split not in by_split:
            raise UsageError(f"{path}: fitted on split seed {split}, eval covers {seeds}")
        if d.get("holdout") != o["holdout"]:
            raise UsageError(f"{path}: fitted with hold-out {d.get('holdout')}, eval uses {o['holdout']}")
        by_split[split].append((d["model"], snaps))

    out = Path(o["out"])
    lines = []
    for s in seeds:
        train, held = holdout_split(g, o["holdout"], s)
        tables = [(kind, evalkit.baseline_table(train, held, kind)) for kind in kinds]
        for model in models:
            res = run_chain(train, model, hyper, o["seed"])
            tables.append((model, evalkit.posterior_predict(res.snapshots, held)))
        for model, snaps in by_split[s]:
            tables.append((model, evalkit.posterior_predict(snaps, held)))
        for name, table in tables:
            lines.append(evalkit.summary_json(name, s, table))
            _write(out.with_name(f"{out.name}.{name}.split{s}.scores.csv"), table.to_csv())
    _write(out.with_name(out.name + ".summary.jsonl"), "".join(line + "\n" for line in lines))
    sys.stdout.write("".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_stats(cfg: RunConfig) -> int:
    g = _read_graph(cfg.options["input"])
    sys.stdout.write(stats_json(g) + "\n")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "eval": cmd_eval, "stats": cmd_stats}


def main(argv=None) -> int:
    try:
        cfg = parse(sys.argv[1:] if argv is None else argv)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"imrm: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"imrm: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[cfg.command](cfg)
    except (UsageError, ParamError, ConfigError, SplitError, ValueError) as e:
        if isinstance(e, EdgeListError):
            print(f"imrm: {e}", file=sys.stderr)
            return EXIT_IO
        print(f"imrm: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"imrm: {e}", file=sys.stderr)
        return EXIT_IO
    except (StateError, FloatingPointError) as e:
        print(f"imrm: numerical invariant violated: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
