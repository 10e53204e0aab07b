"""Command-line surface: dataset utilities, single-shot baselines, full
active-learning runs, and the interactive oracle service.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.  Verbosity
comes from the FLAGRANK_LOG environment variable (DEBUG/INFO/WARNING/...).
"""

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import adaen, alloop, baselines, dataio, ranking
from .errors import FlagrankError, FormatError, NumericError, PreconditionError
from .util import derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; we reserve 2 for data."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_dataset(path):
    with open(path, encoding="utf-8") as fh:
        return dataio.parse_fvs(fh)


def _read_truth(path, dataset):
    with open(path, encoding="utf-8") as fh:
        truth, warnings = dataio.load_ground_truth(fh, dataset)
    for w in warnings:
        logger.warning("%s", w)
    return truth


def _print_stats(dataset, truth):
    st = dataio.stats(dataset, truth)
    print(f"rows: {st.num_rows}")
    print(f"attrs: {st.num_attrs}")
    if truth is not None:
        print(f"attacks: {st.num_attacks}")
        print(f"attack_ratio: {dataio.format_percent(st.attack_ratio)}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    dataset, truth = dataio.synth_planted(
        args.normal, args.attack, args.attrs, seed=args.seed
    )
    out = Path(args.out)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(dataio.serialize_fvs(dataset))
    truth_path = out.with_suffix(out.suffix + ".truth")
    with open(truth_path, "w", encoding="utf-8") as fh:
        for pid in sorted(truth.attack_ids):
            fh.write(pid + "\n")
    _print_stats(dataset, truth)
    print(f"wrote {out} and {truth_path}")
    return EXIT_OK


def cmd_convert(args):
    with open(args.input, encoding="utf-8") as fh:
        dataset = dataio.convert_dense_csv(fh)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(dataio.serialize_fvs(dataset))
    print(f"wrote {args.out} ({dataset.num_rows} rows, "
          f"{dataset.num_attrs} attrs)")
    return EXIT_OK


def cmd_stats(args):
    dataset = _read_dataset(args.dataset)
    truth = _read_truth(args.truth, dataset) if args.truth else None
    _print_stats(dataset, truth)
    return EXIT_OK


def _score_with_adaen(dataset, args):
    config = adaen.AdaenConfig(
        input_dim=dataset.num_attrs,
        hidden=args.hidden,
        latent=args.latent,
        alpha=args.alpha,
        lam=args.lam,
        lr=args.lr,
        batch=args.batch,
        epochs_per_iteration=args.epochs,
        seed=derive_seed(args.seed, "adaen"),
    )
    model = adaen.build(config)
    if args.epochs > 0:
        adaen.train(
            model,
            dataset.to_dense(),
            epochs=args.epochs,
            seed=derive_seed(args.seed, "train/0"),
        )
    return adaen.anomaly_scores(model, dataset)


def cmd_baseline(args):
    dataset = _read_dataset(args.dataset)
    truth = _read_truth(args.truth, dataset) if args.truth else None
    if args.method == "avf":
        scored = baselines.avf_scores(dataset)
    elif args.method == "iforest":
        model = baselines.iforest_fit(
            dataset,
            num_trees=args.trees,
            psi=args.subsample,
            seed=args.seed,
        )
        scored = baselines.iforest_scores(model, dataset)
    else:
        scored = _score_with_adaen(dataset, args)
    ranked = ranking.rank(scored)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "ranking.csv", "w", encoding="utf-8") as fh:
        ranking.write_ranking_csv(fh, ranked, truth)
    scores = [s.error for s in scored]
    tau = adaen.calibrate_threshold(scores, args.percentile)
    hist = ranking.error_histogram(scores, bins=args.bins, threshold=tau)
    with open(out_dir / "histogram.json", "w", encoding="utf-8") as fh:
        json.dump(hist, fh, indent=2)
        fh.write("\n")
    if truth is not None:
        print(f"ndcg={ranking.ndcg(ranked, truth)!r}")
    print(f"wrote {out_dir / 'ranking.csv'} and {out_dir / 'histogram.json'}")
    return EXIT_OK


def _run_config_from_args(args):
    budget = args.budget
    if budget is None:
        budget = args.iterations * args.k
    return alloop.RunConfig(
        budget=budget,
        iterations=args.iterations,
        k=args.k,
        query_mix=args.mix,
        initial_labeled_fraction=args.initial_fraction,
        percentile=args.percentile,
        synth_ratio=args.rho,
        warm_start=not args.cold_start,
        holdout_fraction=args.holdout,
        plateau_stop=args.plateau_stop,
        seed=args.seed,
        hidden=args.hidden,
        latent=args.latent,
        alpha=args.alpha,
        lam=args.lam,
        lr=args.lr,
        batch=args.batch,
        epochs_per_iteration=args.epochs,
        gan_epochs=args.gan_epochs,
    )


def _build_oracle(args, truth):
    if args.oracle == "simulated":
        if truth is None:
            raise PreconditionError(
                "the simulated oracle needs --truth to answer queries"
            )
        return alloop.SimulatedOracle(truth, noise=args.noise, seed=args.seed)
    if args.oracle.startswith("scripted:"):
        path = args.oracle.split(":", 1)[1]
        mapping = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise FormatError(
                        f"line {lineno}: expected 'process_id<TAB>label'"
                    )
                mapping[parts[0]] = parts[1]
        return alloop.ScriptedOracle(mapping)
    raise PreconditionError(
        f"unknown oracle {args.oracle!r}; use 'simulated' or 'scripted:PATH'"
    )


def cmd_al_run(args):
    dataset = _read_dataset(args.dataset)
    truth = _read_truth(args.truth, dataset) if args.truth else None
    config = _run_config_from_args(args)
    oracle = _build_oracle(args, truth)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = alloop.ActiveLearningRun(dataset, config, truth=truth)
    run.checkpoint_path = str(out_dir / "checkpoint.json")
    run.start()
    while True:
        pending = run.propose_queries()
        if pending is None:
            break
        run.complete_iteration(alloop.resolve_labels(pending.batch, oracle))
    with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
        alloop.write_metrics_jsonl(run.metrics, fh)
    with open(out_dir / "ranking.csv", "w", encoding="utf-8") as fh:
        ranking.write_ranking_csv(fh, run.last_ranked, truth)
    series = [m.ndcg for m in run.metrics if m.ndcg is not None]
    if series:
        print(
            f"ndcg max={max(series)!r} mean={statistics.fmean(series)!r} "
            f"median={statistics.median(series)!r}"
        )
    print(
        f"iterations={run.metrics[-1].iteration} "
        f"labels_spent={run.labels_spent}"
    )
    print(f"wrote {out_dir / 'metrics.jsonl'}, {out_dir / 'ranking.csv'}, "
          f"{out_dir / 'checkpoint.json'}")
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from . import service

    dataset = _read_dataset(args.dataset)
    truth = _read_truth(args.truth, dataset) if args.truth else None
    if args.resume:
        if not args.checkpoint:
            raise PreconditionError("--resume requires --checkpoint PATH")
        with open(args.checkpoint, encoding="utf-8") as fh:
            run = alloop.ActiveLearningRun.resume(fh, dataset, truth=truth)
    else:
        initial = None
        if args.seed_labels:
            with open(args.seed_labels, encoding="utf-8") as fh:
                initial = [
                    ln.strip() for ln in fh
                    if ln.strip() and not ln.startswith("#")
                ]
        config = _run_config_from_args(args)
        run = alloop.ActiveLearningRun(
            dataset, config, truth=truth, initial_normal_ids=initial
        )
    if args.checkpoint:
        run.checkpoint_path = args.checkpoint
    runner = service.SessionRunner(run)
    frontend = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    app = service.create_app(runner, frontend_dir=frontend)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as err:  # port bind failure and friends
        print(f"serve: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_model_flags(p):
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--latent", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--epochs", type=int, default=20,
                   help="training epochs per iteration")


def _add_loop_flags(p):
    p.add_argument("--iterations", type=int, default=40)
    p.add_argument("--budget", type=int, default=None,
                   help="oracle label budget (default: iterations * k)")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--mix", type=float, default=0.5,
                   help="fraction of each batch from uncertainty sampling")
    p.add_argument("--percentile", type=float, default=0.8)
    p.add_argument("--rho", type=float, default=1.0,
                   help="synthetic rows per newly labeled normal")
    p.add_argument("--initial-fraction", type=float, default=0.05)
    p.add_argument("--holdout", type=float, default=0.0)
    p.add_argument("--cold-start", action="store_true",
                   help="rebuild the model each iteration instead of warm-start")
    p.add_argument("--plateau-stop", action="store_true")
    p.add_argument("--gan-epochs", type=int, default=30)
    _add_model_flags(p)


def build_parser():
    parser = _Parser(prog="flagrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset")
    p.add_argument("--normal", type=int, required=True)
    p.add_argument("--attack", type=int, required=True)
    p.add_argument("--attrs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert a dense 0/1 CSV to .fvs")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("stats", help="print dataset shape and attack ratio")
    p.add_argument("dataset")
    p.add_argument("--truth", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("baseline",
                       help="single-shot train/score/rank with one method")
    p.add_argument("dataset")
    p.add_argument("--truth", default=None)
    p.add_argument("--method", choices=("adaen", "avf", "iforest"),
                   required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--percentile", type=float, default=0.8)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--trees", type=int, default=baselines.DEFAULT_TREES)
    p.add_argument("--subsample", type=int,
                   default=baselines.DEFAULT_SUBSAMPLE)
    _add_model_flags(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("al-run",
                       help="full active-learning run with a non-human oracle")
    p.add_argument("dataset")
    p.add_argument("--truth", required=True)
    p.add_argument("--oracle", default="simulated",
                   help="'simulated' or 'scripted:PATH'")
    p.add_argument("--noise", type=float, default=0.0,
                   help="simulated-oracle label flip probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    _add_loop_flags(p)
    p.set_defaults(func=cmd_al_run)

    p = sub.add_parser("serve", help="start the interactive oracle service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--truth", default=None)
    p.add_argument("--seed-labels", default=None,
                   help="file of known-normal ids for the starting pool")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_loop_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    level = os.environ.get("FLAGRANK_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as err:
        print(f"flagrank: numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except FlagrankError as err:
        print(f"flagrank: {err}", file=sys.stderr)
        return EXIT_DATA
    except OSError as err:
        print(f"flagrank: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
