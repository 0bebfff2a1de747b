"""Command line interface.

    gridwatch run      --config pipeline.conf
    gridwatch replay   --input stream.csv --speed 4
    gridwatch hyperlab --metric D1_retrain --tau-grid 0.5,2,8,10 --replicates 50
    gridwatch classify --train features.csv --folds 10

Every pipeline config key can also be set via a GRIDWATCH_<KEY> environment
variable (see README).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from gridwatch import hyperlab, ingest
from gridwatch.features import FEATURE_COLUMNS, read_feature_csv
from gridwatch.pipeline import Pipeline, PipelineConfig
from gridwatch.preprocess import fit_standardization, standardize
from gridwatch.server import GridwatchServer
from gridwatch.tree import TrainConfig, accuracy, cross_validate, train_tree


def _load_series_csv(path: str, input_rate: float, resolution: float) -> np.ndarray:
    """CSV -> channel vectors -> coarse grid -> standardized matrix."""
    with open(path, "rb") as fh:
        vectors = [ingest.derive_channels(s) for s in ingest.parse_csv_stream(fh)]
    coarse = ingest.coarse_grain(vectors, input_rate, resolution)
    values = ingest.to_matrix(coarse)
    params = fit_standardization(values)
    return standardize(values, params)


def _block_until_interrupt():
    import threading

    threading.Event().wait()


def _serve(config: PipelineConfig) -> int:
    pipeline = Pipeline(config)
    server = GridwatchServer(pipeline).start()
    print(f"gridwatch: serving on http://{server.address}  (Ctrl-C to stop)")
    try:
        pipeline.run()
        print(f"gridwatch: input exhausted after {pipeline.ticks} ticks, "
              f"{len(pipeline.store.events)} events; API stays up for review")
        _block_until_interrupt()
    except KeyboardInterrupt:
        pipeline.stop()
    finally:
        server.stop()
        pipeline.close()
    return 0


def _cmd_run(args) -> int:
    return _serve(PipelineConfig.load(args.config))


def _cmd_replay(args) -> int:
    overrides = {
        "input_csv": args.input,
        "replay_speed": args.speed,
        "threshold_t": args.threshold,
        "tau_minutes": args.tau_minutes,
        "resolution_s": args.resolution,
        "input_rate_hz": args.input_rate,
        "persist_dir": args.persist_dir,
        "listen": args.listen,
        "classifier": args.classifier,
    }
    return _serve(PipelineConfig.load(None, overrides={k: v for k, v in overrides.items() if v is not None}))


def _cmd_hyperlab(args) -> int:
    taus = [float(t) for t in args.tau_grid.split(",")]
    base = None
    if args.input:
        base = _load_series_csv(args.input, args.input_rate, args.resolution)
    if args.metric == "D1_retrain":
        report = hyperlab.retrain_error_experiment(
            base, taus, replicates=args.replicates, seed=args.seed, resolution_s=args.resolution
        )
    elif args.metric == "D2_drift":
        if base is None:
            # no recorded stream: use a slowly drifting synthetic system so the
            # curve still shows the drift signature
            from gridwatch.varmodel import VarModel

            rng = np.random.default_rng(args.seed)
            A = np.diag([0.97, 0.96, 0.95, 0.98]) + rng.uniform(-0.01, 0.01, (4, 4)) * (1 - np.eye(4))
            model = VarModel(c=np.zeros(4), coefs=A[None], sigma=0.05 * np.eye(4))
            n = 2 * hyperlab.tau_to_samples(max(taus), args.resolution) * max(4, args.replicates)
            base = hyperlab.synthesize_drifting_series(
                model,
                n,
                seed=args.seed,
                drift_amplitude=0.3,
                drift_period=3.5 * hyperlab.tau_to_samples(max(taus), args.resolution),
            )
        report = hyperlab.drift_experiment(base, taus, resolution_s=args.resolution)
    else:
        pairs = [tuple(map(float, p.split(":"))) for p in args.pairs.split(",")]
        report = hyperlab.lag_depth_experiment(
            base,
            [(int(p), t) for p, t in pairs],
            replicates=args.replicates,
            seed=args.seed,
            resolution_s=args.resolution,
        )
    csv_text = report.to_csv()
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(csv_text)
    for tau, p, med in zip(report.tau_minutes, report.lag_orders, report.medians()):
        print(f"# {report.metric}  tau={tau:g}min  p={p}  median={med:.6f}")
    return 0


def _cmd_classify(args) -> int:
    ids, labels, X = read_feature_csv(Path(args.train).read_text(encoding="utf-8"))
    if X.shape[0] == 0:
        print("no labeled rows in training file", file=sys.stderr)
        return 1
    config = TrainConfig(max_depth=args.max_depth, min_leaf=args.min_leaf)
    mean, folds, confusion = cross_validate(X, labels, folds=args.folds, config=config, seed=args.seed)
    classes = tuple(sorted(set(labels)))
    print(f"{args.folds}-fold CV accuracy: {mean:.4f}")
    print("per fold: " + " ".join(f"{a:.3f}" for a in folds))
    print("confusion (rows true, cols predicted; order " + ", ".join(classes) + "):")
    print(confusion)
    tree = train_tree(X, labels, config)
    if args.print_tree:
        print(tree.to_text(feature_names=list(FEATURE_COLUMNS)))
    if args.export_tree:
        Path(args.export_tree).write_text(json.dumps(tree.to_dict(), sort_keys=True), encoding="utf-8")
        print(f"wrote {args.export_tree}")
    if args.eval:
        _, eval_labels, eval_X = read_feature_csv(Path(args.eval).read_text(encoding="utf-8"))
        print(f"eval accuracy: {accuracy(tree, eval_X, eval_labels):.4f} on {eval_X.shape[0]} rows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridwatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the live service from a config file")
    p_run.add_argument("--config", required=True, help="key = value config file")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("replay", help="replay a recorded CSV through the service")
    p_rep.add_argument("--input", required=True, help="PMU CSV file")
    p_rep.add_argument("--speed", type=float, default=0.0, help="replay speed multiplier (0 = max)")
    p_rep.add_argument("--threshold", type=float, default=None)
    p_rep.add_argument("--tau-minutes", dest="tau_minutes", type=float, default=None)
    p_rep.add_argument("--resolution", type=float, default=None)
    p_rep.add_argument("--input-rate", dest="input_rate", type=float, default=None)
    p_rep.add_argument("--persist-dir", dest="persist_dir", default=None)
    p_rep.add_argument("--listen", default=None)
    p_rep.add_argument("--classifier", default=None, help="trained tree JSON")
    p_rep.set_defaults(func=_cmd_replay)

    p_lab = sub.add_parser("hyperlab", help="hyperparameter selection experiments")
    p_lab.add_argument("--metric", choices=["D1_retrain", "D2_drift", "D1_lag_depth"], required=True)
    p_lab.add_argument("--tau-grid", dest="tau_grid", default="0.5,2,8,10")
    p_lab.add_argument("--pairs", default="1:10,2:20", help="lag:tau pairs for D1_lag_depth")
    p_lab.add_argument("--replicates", type=int, default=50)
    p_lab.add_argument("--seed", type=int, default=7)
    p_lab.add_argument("--input", default=None, help="recorded PMU CSV (synthetic if omitted)")
    p_lab.add_argument("--input-rate", dest="input_rate", type=float, default=30.0)
    p_lab.add_argument("--resolution", type=float, default=0.5)
    p_lab.add_argument("--output", default=None, help="report CSV path")
    p_lab.set_defaults(func=_cmd_hyperlab)

    p_cls = sub.add_parser("classify", help="train/evaluate the event classifier")
    p_cls.add_argument("--train", required=True, help="feature CSV (see export endpoint)")
    p_cls.add_argument("--eval", default=None)
    p_cls.add_argument("--folds", type=int, default=10)
    p_cls.add_argument("--seed", type=int, default=0)
    p_cls.add_argument("--max-depth", dest="max_depth", type=int, default=8)
    p_cls.add_argument("--min-leaf", dest="min_leaf", type=int, default=5)
    p_cls.add_argument("--export-tree", dest="export_tree", default=None)
    p_cls.add_argument("--print-tree", dest="print_tree", action="store_true")
    p_cls.set_defaults(func=_cmd_classify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
