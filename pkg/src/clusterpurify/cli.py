"""Command line entry point: gen-data, train, eval, sweep, ablate.

Every subcommand writes its outputs into the ``--out`` directory and logs
the fully resolved configuration (including the seed) to stderr and to a
``config.json`` next to the outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import DatasetError, SyntheticConfig, generate_synthetic, load_dataset, write_dataset
from .harness import EvalProtocol, benchmark_config, evaluate, run_sweep, sample_episodes
from .purify import MODES, PcpConfig, pcp_run
from .simnet import CheckpointError, ShapeError, load_checkpoint, save_checkpoint
from .trainer import HIGHER_SHOT, TrainConfig, train

log = logging.getLogger("clusterpurify")

AXIS_ALIASES = {
    "T": "T", "t": "T", "iterations": "T",
    "L": "L", "l": "L", "top-l": "L", "top_l": "L",
    "lambda": "lambda", "lam": "lambda",
    "ablation": "ablation", "mode": "ablation",
}


def _episode_flags(p: argparse.ArgumentParser, with_dataset=True):
    d = EvalProtocol()
    if with_dataset:
        p.add_argument("--dataset", required=True, help="test split, JSON Lines")
    p.add_argument("--ways", type=int, default=d.ways)
    p.add_argument("--shots", type=int, default=d.shots)
    p.add_argument("--queries", type=int, default=d.queries)
    p.add_argument("--normalize-embeddings", action="store_true")


def _eval_flags(p: argparse.ArgumentParser):
    d = EvalProtocol()
    _episode_flags(p)
    p.add_argument("--iterations", type=int, default=d.iterations)
    p.add_argument("--top-l", type=int, default=d.top_l)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--mode", choices=MODES, default=d.mode)
    p.add_argument("--episodes", type=int, default=d.episodes)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--model-classifier", required=True)
    p.add_argument("--model-relation", default=None)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clusterpurify", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic train/test embedding benchmark")
    g.add_argument("--config", help="JSON file with SyntheticConfig fields")
    g.add_argument("--seed", type=int, default=None, help="override the config seed")
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="two-stage training of classifier and relation nets")
    t.add_argument("--dataset", required=True, help="train split, JSON Lines")
    t.add_argument("--validation-dataset", default=None)
    t.add_argument("--ways", type=int, default=5)
    t.add_argument("--shots", type=int, default=1, help="evaluation shots")
    t.add_argument("--train-shots", type=int, default=None, help="default: higher-shot rule")
    t.add_argument("--queries", type=int, default=15)
    t.add_argument("--episodes-stage1", type=int, default=TrainConfig.episodes_stage1)
    t.add_argument("--episodes-stage2", type=int, default=TrainConfig.episodes_stage2)
    t.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--hidden", type=int, nargs=2, default=list(TrainConfig.hidden_dims))
    t.add_argument("--validation-interval", type=int, default=0)
    t.add_argument("--validation-episodes", type=int, default=200)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--normalize-embeddings", action="store_true")
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="episode-averaged accuracy with 95%% CI")
    _eval_flags(e)
    e.add_argument("--trace", type=int, default=0, metavar="N",
                   help="write per-iteration traces of the first N episodes")

    s = sub.add_parser("sweep", help="paired sweep over T, L, lambda or ablation mode")
    _eval_flags(s)
    s.add_argument("--axis", required=True, choices=sorted(AXIS_ALIASES))
    s.add_argument("--values", required=True, help="comma-separated axis values")

    a = sub.add_parser("ablate", help="paired sweep over all ablation modes")
    _eval_flags(a)
    return parser


def _write_config(out: Path, command: str, config: dict):
    log.info("%s config: %s", command, json.dumps(config, sort_keys=True))
    with open(out / "config.json", "w") as fh:
        json.dump({"command": command, **config}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(path, split, normalize):
    ds = load_dataset(path, split=split)
    return ds.normalized() if normalize else ds


def _eval_inputs(args, parser):
    needs_relation = (
        args.mode in ("intra_pos_only", "full")
        or args.command == "ablate"
        or AXIS_ALIASES.get(getattr(args, "axis", None)) == "ablation"
    )
    if needs_relation and args.model_relation is None:
        parser.error("--model-relation is required for this mode")
    dataset = _load(args.dataset, "test", args.normalize_embeddings)
    classifier = load_checkpoint(args.model_classifier)
    relation = load_checkpoint(args.model_relation) if args.model_relation else None
    pcp = PcpConfig(args.iterations, args.top_l, args.lam, args.mode)
    return dataset, classifier, relation, pcp


def _eval_config(args) -> dict:
    return {
        "dataset": args.dataset,
        "model_classifier": args.model_classifier,
        "model_relation": args.model_relation,
        "ways": args.ways, "shots": args.shots, "queries": args.queries,
        "iterations": args.iterations, "top_l": args.top_l, "lambda": args.lam,
        "mode": args.mode, "episodes": args.episodes, "seed": args.seed,
        "normalize_embeddings": args.normalize_embeddings,
    }


def _parse_values(axis, text, parser):
    items = [v.strip() for v in text.split(",") if v.strip()]
    try:
        if axis in ("T", "L"):
            return [int(v) for v in items]
        if axis == "lambda":
            return [float(v) for v in items]
    except ValueError:
        parser.error(f"invalid --values for axis {axis}: {text!r}")
    bad = [v for v in items if v not in MODES]
    if bad:
        parser.error(f"unknown ablation modes: {bad}")
    return items


def cmd_gen_data(args, parser):
    out = Path(args.out)
    if args.config:
        cfg = SyntheticConfig.from_json(args.config)
    else:
        cfg = SyntheticConfig(**benchmark_config()["synthetic"])
    if args.seed is not None:
        cfg = SyntheticConfig(**{**cfg.__dict__, "seed": args.seed})
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, "gen-data", dict(cfg.__dict__))
    train_ds, test_ds = generate_synthetic(cfg)
    write_dataset(train_ds, out / "train.jsonl")
    write_dataset(test_ds, out / "test.jsonl")
    cfg.to_json(out / "synthetic_config.json")


def cmd_train(args, parser):
    out = Path(args.out)
    train_shots = args.train_shots or HIGHER_SHOT.get(args.shots, args.shots)
    cfg = TrainConfig(
        ways=args.ways, train_shots=train_shots, eval_shots=args.shots, queries=args.queries,
        episodes_stage1=args.episodes_stage1, episodes_stage2=args.episodes_stage2,
        learning_rate=args.learning_rate, seed=args.seed, hidden_dims=tuple(args.hidden),
        validation_interval=args.validation_interval, validation_episodes=args.validation_episodes,
    )
    dataset = _load(args.dataset, "train", args.normalize_embeddings)
    validation = (
        _load(args.validation_dataset, "validation", args.normalize_embeddings)
        if args.validation_dataset else None
    )
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, "train", {"dataset": args.dataset, "validation_dataset": args.validation_dataset,
                                 "normalize_embeddings": args.normalize_embeddings, **cfg.to_dict()})
    classifier, relation, tlog = train(dataset, cfg, validation)
    save_checkpoint(classifier, out / "classifier.json")
    save_checkpoint(relation, out / "relation.json")
    tlog.write_csv(out / "trainlog.csv")


def cmd_eval(args, parser):
    out = Path(args.out)
    dataset, classifier, relation, pcp = _eval_inputs(args, parser)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, "eval", _eval_config(args))
    report = evaluate(dataset, classifier, relation, pcp, args.episodes, args.seed,
                      args.ways, args.shots, args.queries)
    report.write_json(out / "report.json")
    report.write_csv(out / "episodes.csv")
    if args.trace:
        episodes = sample_episodes(dataset, args.ways, args.shots, args.queries,
                                    min(args.trace, args.episodes), args.seed)
        with open(out / "trace.jsonl", "w") as fh:
            for i, ep in enumerate(episodes):
                res = pcp_run(ep, classifier, relation, pcp)
                for rec in res.trace_records(ep.query_labels):
                    fh.write(json.dumps({"episode": i, **rec}) + "\n")
    print(f"accuracy {report.mean:.4f} +- {report.ci95:.4f} over {report.n_episodes} episodes")


def _sweep(args, parser, axis, values):
    out = Path(args.out)
    dataset, classifier, relation, pcp = _eval_inputs(args, parser)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out, args.command, {**_eval_config(args), "axis": axis, "values": values})
    sweep = run_sweep(axis, values, pcp, dataset, classifier, relation, args.episodes, args.seed,
                      args.ways, args.shots, args.queries)
    sweep.write_csv(out / "sweep.csv")
    sweep.write_json(out / "sweep.json")
    for v, rep in sweep.points:
        print(f"{axis}={v}: {rep.mean:.4f} +- {rep.ci95:.4f}")


def cmd_sweep(args, parser):
    axis = AXIS_ALIASES[args.axis]
    _sweep(args, parser, axis, _parse_values(axis, args.values, parser))


def cmd_ablate(args, parser):
    _sweep(args, parser, "ablation", list(MODES))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    # resolved config is always logged, whatever the verbosity
    log.setLevel(logging.INFO)
    try:
        COMMANDS[args.command](args, parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, DatasetError, CheckpointError, ShapeError, ValueError) as exc:
        print(f"clusterpurify {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
