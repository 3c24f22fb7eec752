"""``fansmb`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O error.
"""
import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .bounds import build_reports, verify_bounds
from .estimator import FansScorer
from .fans import TrainingDivergence, build_model, checkpoint
from .fans.masking import default_batch_size
from .fans.train import TrainConfig, train
from .gauss import GaussianScorer, SingularMatrixError, sample_covariance
from .graph import GraphError, all_markov_boundaries, moral_from_mbs
from .greedy import DiscoveryError, SearchConfig, discover_all
from .metrics import evaluate_run, metrics_csv, metrics_table
from .seeding import child_seed
from .synth import (NOISE_FAMILIES, NoiseSpec, analytic_covariance, mixed_noise_specs,
                    sample_er_dag, sample_sem_weights, simulate_gp_sem, simulate_linear_sem)

log = logging.getLogger("fansmb")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
ORACLE_MAX_D = 8


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers -----------------------------------------------------------------------

def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _noise_for(name, d, seed):
    if name == "mixed":
        return mixed_noise_specs(d, seed)
    return [NoiseSpec(name)] * d


def _load_dataset(args):
    ds = fio.read_dataset(args.data)
    return ds.standardize() if args.standardize else ds


def _rng_int(seed, name):
    return child_seed(seed, name)


# -- commands --------------------------------------------------------------------

def cmd_generate(args):
    if args.d is None:
        raise UsageError("generate: --d is required")
    out = _out_dir(args)
    base = _rng_int(args.seed, "datagen")
    sub = np.random.SeedSequence(base).generate_state(4)
    dag = sample_er_dag(args.d, args.degree, int(sub[0]))
    noise = _noise_for(args.noise, args.d, int(sub[1]))
    if args.sem == "linear":
        weights = sample_sem_weights(dag, int(sub[2]))
        dag = dag.with_weights(weights)
        ds = simulate_linear_sem(dag, weights, args.n, noise, int(sub[3]))
    else:
        ds = simulate_gp_sem(dag, args.n, noise, int(sub[3]), bandwidth=args.bandwidth)
    if args.standardize:
        ds = ds.standardize()
    fio.write_dataset(out / "data.csv", ds)
    fio.write_dag(out / "dag.csv", dag, ds.names)
    manifest = {
        "command": "generate", "seed": args.seed, "d": args.d, "degree": args.degree, "sem": args.sem,
        "noise": args.noise, "n": args.n, "standardize": bool(args.standardize), "bandwidth": args.bandwidth,
        "edges": len(dag.edges),
        "node_noise": {name: spec.to_dict() for name, spec in zip(ds.names, noise)},
    }
    fio.write_json(out / "manifest.json", manifest)
    log.info("wrote %d x %d dataset with %d edges to %s", ds.n, ds.d, len(dag.edges), out)
    return EXIT_OK


def cmd_train(args):
    ds = _load_dataset(args)
    out = _out_dir(args)
    model = build_model(ds.d, seed=_rng_int(args.seed, "init"), M=args.M,
                        compact=True if args.compact else None,
                        hidden_layers=args.hidden_layers, flow_layers=args.flow_layers)
    cfg = TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed,
                      batch_size=args.batch_size or default_batch_size(ds.d))

    def report(epoch, nll):
        if args.verbose and epoch % 50 == 0:
            log.info("epoch %d nll %.5f", epoch, nll)

    model, trace = train(model, ds, cfg, report)
    extra = {"names": ds.names, "train": cfg.to_dict(), "standardize": bool(args.standardize)}
    if args.standardize:
        extra["means"] = [float(v) for v in ds.means]
        extra["stds"] = [float(v) for v in ds.stds]
    checkpoint.save(out / "model.fans", model, extra)
    fio.write_loss_trace(out / "loss.csv", trace)
    log.info("trained %d epochs, final nll %s", len(trace), trace[-1] if trace else "n/a")
    return EXIT_OK


def _fans_scorer(args, ds):
    model, extra = checkpoint.load(args.checkpoint)
    if model.config.d != ds.d:
        raise UsageError(f"checkpoint expects d={model.config.d}, dataset has d={ds.d}")
    x = ds.data
    if extra.get("standardize") and not ds.standardized:
        x = (x - np.asarray(extra["means"])) / np.asarray(extra["stds"])
    return FansScorer(model, x, K=args.K, seed=_rng_int(args.seed, "mceval")), model.config.M


def cmd_discover(args):
    ds = _load_dataset(args)
    out = _out_dir(args)
    if args.scorer == "fans":
        if not args.checkpoint:
            raise UsageError("discover: --scorer fans needs --checkpoint (run `train` first)")
        scorer, model_m = _fans_scorer(args, ds)
        M = args.M or model_m
    else:
        scorer = GaussianScorer.from_dataset(ds)
        M = args.M or ds.d
    cfg = SearchConfig.defaults_for(ds.d, dense=args.dense, eps_g=args.eps_g, eps_s=args.eps_s,
                                    patience=args.patience, M=M, K=args.K, symmetry=args.symmetry,
                                    seed=args.seed)
    mb_map, results = discover_all(ds.d, scorer, cfg, workers=args.workers)
    names = ds.names
    traces = {names[t]: {"grow": [[names[v], h] for v, h in r.grow_trace],
                         "shrink": [[names[v], h] for v, h in r.shrink_trace]}
              for t, r in sorted(results.items())}
    meta = {"config": cfg.to_dict(), "seed": args.seed, "scorer": args.scorer,
            "standardize": bool(args.standardize), "traces": traces}
    fio.write_mb(out / "mb.json", mb_map, names, meta)
    if args.bounds:
        truth = None
        if args.truth:
            dag, tnames = fio.read_dag(args.truth)
            truth = _truth_by_name(dag, tnames, names)
        _write_bounds(out, ds, {t: r.mb_plus for t, r in results.items()},
                      truth or {t: r.members for t, r in results.items()}, args,
                      scorer if args.scorer == "fans" else None)
    log.info("wrote %s", out / "mb.json")
    return EXIT_OK


def _truth_by_name(dag, tnames, names):
    if sorted(tnames) != sorted(names):
        raise fio.FormatError("variable names in truth DAG and data differ")
    pos = {n: i for i, n in enumerate(names)}
    mbs = all_markov_boundaries(dag)
    return {pos[tnames[t]]: sorted(pos[tnames[j]] for j in mbs[t]) for t in range(dag.d)}


def _write_bounds(out, ds, mb_plus, truth, args, scorer=None):
    cov = sample_covariance(ds)
    reports = build_reports(cov, mb_plus, truth, ds.n, args.gamma, args.delta_e, args.bounds_mode, scorer)
    rows = []
    failed = 0
    for rep in reports:
        verdict = verify_bounds(rep)
        failed += not verdict.passed
        row = rep.to_dict()
        row["target"] = ds.names[rep.target]
        row["passed"] = verdict.passed
        row["violations"] = verdict.violations
        rows.append(row)
    fio.write_json(out / "bounds.json", rows)
    print(f"bounds: {len(rows) - failed}/{len(rows)} targets pass")
    return failed


def cmd_evaluate(args):
    if not args.pred or not args.truth:
        raise UsageError("evaluate: --pred and --truth are required")
    dag, tnames = fio.read_dag(args.truth)
    mb_map, _, _ = fio.read_mb(args.pred, names=tnames)
    missing = [tnames[t] for t in range(dag.d) if t not in mb_map]
    if missing:
        raise fio.FormatError(f"prediction file has no entry for target(s) {', '.join(missing)}")
    rows, mean = evaluate_run(mb_map, dag)
    out = _out_dir(args)
    (out / "metrics.csv").write_text(metrics_csv(rows, mean, tnames), encoding="utf-8")
    print(metrics_table(rows, mean, tnames))
    return EXIT_OK


def brute_force_mb(cov, target, tol=1e-9):
    """Smallest subset attaining the minimum of ``H(target | S)`` over all ``S``."""
    d = cov.shape[0]
    others = [j for j in range(d) if j != target]
    scorer = GaussianScorer(cov)
    best = scorer(target, others)
    for size in range(len(others) + 1):
        for s in itertools.combinations(others, size):
            if scorer(target, s) <= best + tol:
                return set(s)
    return set(others)


def oracle_trial(d, degree, seed, eps=1e-6):
    """One random linear-Gaussian SEM; returns ``(truth, brute, found)`` MB maps."""
    sub = np.random.SeedSequence(seed).generate_state(2)
    dag = sample_er_dag(d, degree, int(sub[0]))
    weights = sample_sem_weights(dag, int(sub[1]))
    cov = analytic_covariance(dag, weights, np.ones(d))
    truth = all_markov_boundaries(dag)
    brute = {t: brute_force_mb(cov, t) for t in range(d)}
    cfg = SearchConfig(eps_g=eps, eps_s=eps, patience=15, M=d)
    found, _ = discover_all(d, GaussianScorer(cov), cfg)
    return truth, brute, found


def cmd_oracle_check(args):
    d = args.d if args.d is not None else 6
    if d > ORACLE_MAX_D:
        raise UsageError(f"oracle-check: d={d} is too large for subset enumeration (max {ORACLE_MAX_D})")
    if d < 2:
        raise UsageError("oracle-check: need d >= 2")
    degree = min(args.degree, d - 1)
    ok = brute_ok = total = 0
    for trial in range(args.trials):
        truth, brute, found = oracle_trial(d, degree, _rng_int(args.seed, f"oracle{trial}"))
        for t in range(d):
            total += 1
            ok += set(found[t]) == set(truth[t])
            brute_ok += brute[t] == set(truth[t])
    rate = ok / total if total else 1.0
    print(f"oracle-check d={d} trials={args.trials}: exact recovery {ok}/{total} ({100 * rate:.1f}%), "
          f"brute-force minimizer = true MB {brute_ok}/{total}")
    return EXIT_OK if ok == total else EXIT_NUMERIC


def cmd_moral(args):
    if not args.pred:
        raise UsageError("moral: --pred is required")
    mb_map, names, _ = fio.read_mb(args.pred)
    moral = moral_from_mbs(mb_map, len(names))
    out = _out_dir(args)
    fio.write_moral(out / "moral.csv", moral)
    log.info("moral mask with %d edges written", len(moral.edges()))
    return EXIT_OK


def cmd_bounds(args):
    if not args.pred or not args.data:
        raise UsageError("bounds: --pred and --data are required")
    ds = _load_dataset(args)
    mb_map, _, meta = fio.read_mb(args.pred, names=ds.names)
    pos = {n: i for i, n in enumerate(ds.names)}
    traces = meta.get("traces", {})
    mb_plus = {pos[n]: [pos[v] for v, _ in tr["grow"]] for n, tr in traces.items()} if traces else mb_map
    truth = mb_map
    if args.truth:
        dag, tnames = fio.read_dag(args.truth)
        truth = _truth_by_name(dag, tnames, ds.names)
    out = _out_dir(args)
    # diagnostic only: violations are reported in bounds.json, not through the exit code
    _write_bounds(out, ds, mb_plus, truth, args)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "discover": cmd_discover, "evaluate": cmd_evaluate,
    "oracle-check": cmd_oracle_check, "moral": cmd_moral, "bounds": cmd_bounds,
}


# -- parser ------------------------------------------------------------------------

GLOBAL_DEFAULTS = {"seed": 0, "config": None, "out": ".", "workers": 1, "verbose": False}


def _add_globals(p, suppress):
    # accepted before or after the command; the subcommand copy must not clobber an earlier value
    def dflt(name):
        return argparse.SUPPRESS if suppress else GLOBAL_DEFAULTS[name]

    p.add_argument("--seed", type=int, default=dflt("seed"))
    p.add_argument("--config", default=dflt("config"), help="JSON file of flat option defaults; CLI flags win")
    p.add_argument("--out", default=dflt("out"), help="output directory")
    p.add_argument("--workers", type=int, default=dflt("workers"))
    p.add_argument("--verbose", action="store_true", default=dflt("verbose"))


def _common():
    p = _Parser(add_help=False)
    _add_globals(p, suppress=True)
    return p


def _bounds_flags(p):
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta-e", type=float, default=0.01)
    p.add_argument("--bounds-mode", choices=("interlacing", "exact"), default="interlacing")


def build_parser():
    common = _common()
    parser = _Parser(prog="fansmb", description="Markov boundary discovery by conditional-entropy minimization.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", parents=[common], help="sample a synthetic SEM dataset")
    g.add_argument("--d", type=int)
    g.add_argument("--degree", type=float, default=1.0)
    g.add_argument("--sem", choices=("linear", "gp"), default="linear")
    g.add_argument("--noise", choices=NOISE_FAMILIES + ("mixed",), default="gaussian")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--bandwidth", type=float, default=1.0)
    g.add_argument("--standardize", action="store_true")

    t = sub.add_parser("train", parents=[common], help="fit the any-subset flow")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--M", type=int)
    t.add_argument("--compact", action="store_true")
    t.add_argument("--hidden-layers", type=int)
    t.add_argument("--flow-layers", type=int)
    t.add_argument("--standardize", action="store_true")

    d = sub.add_parser("discover", parents=[common], help="greedy Markov boundary search")
    d.add_argument("--data", required=True)
    d.add_argument("--scorer", choices=("gaussian", "fans"), default="gaussian")
    d.add_argument("--checkpoint")
    d.add_argument("--eps-g", type=float)
    d.add_argument("--eps-s", type=float)
    d.add_argument("--patience", type=int)
    d.add_argument("--M", type=int)
    d.add_argument("--K", type=int, default=1000)
    d.add_argument("--symmetry", choices=("union", "intersection", "none"), default="union")
    d.add_argument("--dense", action="store_true", help="use the dense-graph thresholds")
    d.add_argument("--standardize", action="store_true")
    d.add_argument("--bounds", action="store_true")
    d.add_argument("--truth", help="truth DAG used as the bounds reference")
    _bounds_flags(d)

    e = sub.add_parser("evaluate", parents=[common], help="score predictions against a DAG")
    e.add_argument("--pred")
    e.add_argument("--truth")

    o = sub.add_parser("oracle-check", parents=[common], help="exact-covariance soundness check")
    o.add_argument("--d", type=int)
    o.add_argument("--trials", type=int, default=50)
    o.add_argument("--degree", type=float, default=2.0)

    m = sub.add_parser("moral", parents=[common], help="moral-graph mask from an MB file")
    m.add_argument("--pred")

    b = sub.add_parser("bounds", parents=[common], help="error-bound diagnostics for an MB file")
    b.add_argument("--pred")
    b.add_argument("--data")
    b.add_argument("--truth")
    b.add_argument("--standardize", action="store_true")
    _bounds_flags(b)
    return parser, sub


def _apply_config(parser, sub, argv):
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise fio.FormatError(f"{known.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    cmd = next((a for a in argv if a in sub.choices), None)
    if cmd is None:
        return
    sp = sub.choices[cmd]
    dests = {a.dest for a in sp._actions}
    values = {}
    for key, val in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in dests or dest in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {cmd}")
        values[dest] = val
    sp.set_defaults(**{k: v for k, v in values.items() if k not in GLOBAL_DEFAULTS})
    parser.set_defaults(**{k: v for k, v in values.items() if k in GLOBAL_DEFAULTS})


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        _apply_config(parser, sub, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergence, SingularMatrixError, FloatingPointError, np.linalg.LinAlgError,
            NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DiscoveryError as exc:
        for t, err in sorted(exc.failures.items()):
            print(f"target {t}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, fio.FormatError, checkpoint.CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
