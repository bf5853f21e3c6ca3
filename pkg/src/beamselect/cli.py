"""Command-line interface: ``beamselect <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 I/O or
parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io, pipeline
from .exceptions import BeamselectError, ConfigurationError, DomainError, ParseError
from .oracle import EIRP_MODES, BeamRequirement, optimize_matrix
from .selector import select_matrix
from .synthesis import SynthesisParams, synthesize

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_IO = 0, 2, 3, 4


def _config(args) -> pipeline.PipelineConfig:
    config = getattr(args, "config", None)
    try:
        d = io.read_json(config) if config else {}
    except ParseError as exc:
        raise ConfigurationError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        d["out_dir"] = args.out_dir
    return pipeline.PipelineConfig.from_dict(d)


def _print(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def _requirement(path) -> BeamRequirement:
    try:
        return BeamRequirement.from_dict(io.read_json(path))
    except DomainError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def cmd_gen(args, cfg):
    print(pipeline.generate_dataset(cfg))


def cmd_cluster(args, cfg):
    model = pipeline.cluster_stage(cfg)
    _print({"K": model.n_clusters, "inertia": model.inertia_, "n_iter": model.n_iter_})


def cmd_reps(args, cfg):
    model = pipeline.representatives_stage(cfg)
    _print({"costs": [c.total for c in model.representative_costs_]})


def cmd_train(args, cfg):
    clf = pipeline.train_stage(cfg)
    r = clf.report_
    b = clf.best_epoch_
    _print({"best_epoch": b, "train_loss": r.train_loss[b], "val_loss": r.val_loss[b],
            "train_acc": r.train_acc[b], "val_acc": r.val_acc[b]})


def cmd_eval(args, cfg):
    _print(pipeline.eval_stage(cfg))


def cmd_pipeline(args, cfg):
    out = pipeline.run_full_pipeline(cfg)
    _print(io.read_json(out / pipeline.EVAL_SUMMARY))


def cmd_oracle(args, cfg):
    req = _requirement(args.requirement)
    result = optimize_matrix(cfg.geometry, req, cfg.cost_weights, args.budget, cfg.seed, args.eirp_mode)
    out = Path(cfg.out_dir)
    io.save_weights(out / args.name, result.matrix)
    doc = {"cost": result.cost.to_dict(), "elapsed_s": result.elapsed, "evaluations": result.evaluations,
           "params": result.params.to_dict(), "metrics": result.metrics.to_dict()}
    io.write_json(out / (Path(args.name).stem + "_cost.json"), doc)
    _print(doc["cost"])


def cmd_synth(args, cfg):
    try:
        params = SynthesisParams.from_dict(io.read_json(args.params))
    except (TypeError, DomainError) as exc:
        raise ParseError(f"{args.params}: {exc}") from exc
    path = io.save_weights(Path(cfg.out_dir) / args.name, synthesize(cfg.geometry, params))
    print(path)


def cmd_infer(args, cfg):
    req = _requirement(args.requirement)
    clf, cluster_model = pipeline.load_models(cfg.out_dir)
    index, weights, probs = select_matrix(clf, cluster_model, req, cfg.geometry, cfg.power_control)
    io.save_weights(Path(cfg.out_dir) / args.name, weights)
    _print({"cluster": index, "probability": float(probs[index])})


def cmd_export(args, cfg):
    target = Path(args.target) if args.target else Path(cfg.out_dir)
    center = (args.el, args.az)
    _print(pipeline.export_pattern(args.weights, target, cfg.geometry, center, args.search_span,
                                   args.half_span, args.step))


def cmd_bench(args, cfg):
    result = pipeline.benchmark_timing(cfg, args.n_beams)
    io.write_json(Path(cfg.out_dir) / "bench.json", result.to_dict())
    _print(result.to_dict())


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS lets the global flags sit before or after the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out-dir", help="artifacts directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="beamselect", parents=[common],
                                     description="Beam requirement clustering, classification and weight selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    add("gen", cmd_gen, "sample the requirement dataset")
    add("cluster", cmd_cluster, "fit k-means and label the dataset")
    add("reps", cmd_reps, "optimize one weight matrix per cluster")
    add("train", cmd_train, "train the classifier")
    add("eval", cmd_eval, "classification and pattern-fidelity evaluation")
    add("pipeline", cmd_pipeline, "run every stage in order")

    p = add("oracle", cmd_oracle, "optimize a weight matrix for one requirement")
    p.add_argument("requirement", help="requirement JSON")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--eirp-mode", choices=EIRP_MODES, default="absolute")
    p.add_argument("--name", default="oracle_weights.json")

    p = add("synth", cmd_synth, "build a weight matrix from synthesis parameters")
    p.add_argument("params", help="synthesis parameter JSON")
    p.add_argument("--name", default="weights.json")

    p = add("infer", cmd_infer, "select a weight matrix for one requirement")
    p.add_argument("requirement", help="requirement JSON")
    p.add_argument("--name", default="selected_weights.json")

    p = add("export-pattern", cmd_export, "write pattern cuts and metrics of a weight file")
    p.add_argument("weights", help="weight matrix JSON")
    p.add_argument("--target", help="output directory (default: --out-dir)")
    p.add_argument("--el", type=float, default=0.0, help="peak search centre elevation, deg")
    p.add_argument("--az", type=float, default=0.0, help="peak search centre azimuth, deg")
    p.add_argument("--search-span", type=float, default=pipeline.DEFAULT_HALF_SPAN)
    p.add_argument("--half-span", type=float, default=pipeline.DEFAULT_HALF_SPAN)
    p.add_argument("--step", type=float, default=pipeline.DEFAULT_STEP)

    p = add("bench", cmd_bench, "time the optimizer against classifier selection")
    p.add_argument("--n-beams", type=int, default=10)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        args.func(args, cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BeamselectError as exc:
        print(f"stage failed: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
