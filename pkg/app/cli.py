"""Command line: ``python -m app.cli {embed,sosi,baseline,experiment,serve} ...``"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from app.models.baseline import ExtensionStrategy, StrategyTag
from app.models.dataset import Dataset
from app.models.embedding import EmbeddingMethod, EmbeddingSidecar
from app.models.experiment import ExperimentKind
from app.models.sosi import LabelState, SosiConfig
from app.services import baseline_service, harness_service, sosi_service
from app.services.dataset_service import (PRESETS, load_image_dirs, load_matrix_csv, split_labels,
                                          synthetic_curves)
from app.services.embedding_service import embed
from app.services.errors import ArgumentError, ManifoldError, ReportError
from app.services.graph_service import build_class_graphs
from app.services.rbf_service import parse_sigma_grid, save_interpolator

logger = logging.getLogger(__name__)


def _resize(text: str):
    try:
        width, height = text.lower().split("x")
        return int(width), int(height)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not of the form WxH")


def _graph_sigma(text: str) -> Optional[float]:
    return None if text == "auto" else float(text)


def _add_dataset_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("dataset")
    group.add_argument("--data-root", help="directory with one image subdirectory per class")
    group.add_argument("--resize", type=_resize, help="image resolution WxH")
    group.add_argument("--preset", choices=sorted(PRESETS), help="image corpus preset")
    group.add_argument("--features", help="numeric feature CSV")
    group.add_argument("--labels", help="per-row label CSV (empty cell = unlabeled)")
    group.add_argument("--header", action="store_true", help="skip one header line in CSV inputs")
    group.add_argument("--classes", type=int, default=2, help="synthetic curves: class count")
    group.add_argument("--per-class", type=int, default=30, help="synthetic curves: samples per class")
    group.add_argument("--noise", type=float, default=0.05, help="synthetic curves: noise deviation")
    group.add_argument("--labeled-ratio", type=float, help="draw a stratified labeled subset")
    group.add_argument("--seed", type=int, default=0)


def _add_embedding_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("graph and embedding")
    group.add_argument("--knn", type=int, default=7)
    group.add_argument("--graph-sigma", type=_graph_sigma, default=None, help="auto or a positive value")
    group.add_argument("--method", choices=[m.value for m in EmbeddingMethod],
                       default=EmbeddingMethod.SUPERVISED_LAPLACIAN.value)
    group.add_argument("--dim", type=int, help="embedding dimension (default 2, or the preset's)")
    group.add_argument("--mu", type=float, default=0.01)


def _add_sosi_args(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("interpolation")
    group.add_argument("--schedule", help="N:Q:R equispaced center counts")
    group.add_argument("--early-stop", type=float, help="fraction of unlabeled samples admitted as centers")
    group.add_argument("--lambda", dest="weight", type=float, default=1.0)
    group.add_argument("--kproj", type=int, default=5)
    group.add_argument("--sigma-grid", type=parse_sigma_grid, help="lo:hi:count, log-spaced")
    group.add_argument("--fisher-threshold", type=float, default=0.5)
    group.add_argument("--reoptimize", action="store_true", help="reselect scales at every iteration")


def _dataset(args) -> Dataset:
    if args.data_root:
        resize = args.resize or (PRESETS[args.preset]["resize"] if args.preset else None)
        if resize is None:
            raise ArgumentError("--resize or --preset is required with --data-root")
        ds = load_image_dirs(args.data_root, resize)
    elif args.features:
        if not args.labels:
            raise ArgumentError("--labels is required with --features")
        ds = load_matrix_csv(args.features, args.labels, header=args.header)
    else:
        ds = synthetic_curves(args.classes, args.per_class, args.noise, args.seed)
    if args.labeled_ratio is not None:
        ds = split_labels(ds, args.labeled_ratio, args.seed)
    return ds


def _embedding(args, ds: Dataset):
    dim = args.dim or (PRESETS[args.preset]["dim"] if args.preset else 2)
    graphs = build_class_graphs(ds.training_samples, ds.training_labels, args.knn, args.graph_sigma)
    return graphs, embed(graphs, EmbeddingMethod(args.method), dim, args.mu)


def _sosi_config(args, ds: Dataset) -> SosiConfig:
    values = {"weight": args.weight, "knn": args.knn, "projection_neighbors": args.kproj,
              "fisher_threshold": args.fisher_threshold, "reoptimize_scales": args.reoptimize}
    if args.sigma_grid:
        values["sigma_grid"] = args.sigma_grid
    if args.early_stop is not None:
        values["early_stop_fraction"] = args.early_stop
    elif args.preset:
        values["early_stop_fraction"] = PRESETS[args.preset]["early_stop_fraction"]
    if args.schedule:
        try:
            labeled, total, steps = (int(v) for v in args.schedule.split(":"))
        except ValueError:
            raise ArgumentError(f"schedule {args.schedule!r} is not of the form N:Q:R")
        if (labeled, total) != (ds.labeled_count, ds.sample_count):
            raise ArgumentError(f"schedule endpoints must be N={ds.labeled_count} and Q={ds.sample_count}")
        values["iterations"] = steps
    return SosiConfig(**values)


def _point_ids(ds: Dataset) -> np.ndarray:
    return ds.original_index if ds.original_index is not None else np.arange(ds.sample_count)


def _write_labels(ds: Dataset, state: LabelState, path):
    frame = pd.DataFrame({"point": _point_ids(ds), "label": state.labels, "confidence": state.scores})
    try:
        frame.to_csv(path, index=False, float_format="%.10g")
    except OSError as e:
        raise ReportError(f"Cannot write {path}: {e}") from e


def _report_error(ds: Dataset, state: LabelState):
    if ds.truth is not None and ds.labeled_count < ds.sample_count:
        err = harness_service.error_pct(state.labels[ds.labeled_count:], ds.truth[ds.labeled_count:])
        print(f"unlabeled error: {err:.2f}%")


def cmd_embed(args) -> int:
    ds = _dataset(args)
    _, emb = _embedding(args, ds)
    try:
        pd.DataFrame(emb.coordinates).to_csv(args.out, index=False, header=False, float_format="%.17g")
        sidecar = EmbeddingSidecar(method=emb.method, mu=emb.mu, dim=emb.dim,
                                   eigenvalues=emb.eigenvalues.tolist())
        Path(f"{args.out}.json").write_text(sidecar.model_dump_json(indent=2))
    except OSError as e:
        raise ReportError(f"Cannot write {args.out}: {e}") from e
    print(f"embedded {ds.labeled_count} training samples in {emb.dim} dimensions -> {args.out}")
    return 0


def cmd_sosi(args) -> int:
    ds = _dataset(args)
    _, emb = _embedding(args, ds)
    result = sosi_service.run(ds, emb, _sosi_config(args, ds))
    if args.trace:
        sosi_service.write_trace(result.trace, args.trace, _point_ids(ds))
    if args.model:
        save_interpolator(result.interpolator, args.model)
    if args.out:
        _write_labels(ds, result.state, args.out)
    print(f"{len(result.trace)} iterations, {result.interpolator.center_count} centers")
    _report_error(ds, result.state)
    return 0


def cmd_baseline(args) -> int:
    ds = _dataset(args)
    graphs, emb = _embedding(args, ds)
    strategy = ExtensionStrategy(tag=StrategyTag(args.strategy), neighbors=args.neighbors,
                                 kernel_scale=args.kernel_scale, ridge=args.ridge, class_mass=args.class_mass)
    state = baseline_service.run_strategy(strategy, ds, emb, _sosi_config(args, ds), graphs.kernel_scale)
    if args.out:
        _write_labels(ds, state, args.out)
    _report_error(ds, state)
    return 0


def cmd_experiment(args) -> int:
    config = harness_service.load_experiment_config(args.config)
    rows = harness_service.run_experiment(ExperimentKind(args.kind), config)
    out = args.out or config.output
    if out is None:
        raise ArgumentError("no output path: pass --out or set [output] path")
    harness_service.emit_report(rows, out)
    failed = sum(1 for row in rows if row.failed)
    if failed:
        print(f"{failed} cells failed; see {out}", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sosi", description="Semi-supervised out-of-sample extension")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("embed", help="supervised embedding of the labeled samples")
    _add_dataset_args(p)
    _add_embedding_args(p)
    p.add_argument("--out", required=True, help="embedding CSV; a JSON sidecar is written next to it")
    p.set_defaults(func=cmd_embed)

    p = commands.add_parser("sosi", help="progressive interpolation and labeling")
    _add_dataset_args(p)
    _add_embedding_args(p)
    _add_sosi_args(p)
    p.add_argument("--trace", help="per-iteration label and confidence CSV")
    p.add_argument("--model", help="final interpolator file")
    p.add_argument("--out", help="final labels CSV")
    p.set_defaults(func=cmd_sosi)

    p = commands.add_parser("baseline", help="one comparison strategy")
    _add_dataset_args(p)
    _add_embedding_args(p)
    _add_sosi_args(p)
    p.add_argument("--strategy", required=True, choices=[t.value for t in StrategyTag] + ["nn-ambient", "kernel-ridge"])
    p.add_argument("--neighbors", type=int, default=5, help="LLE neighbor count")
    p.add_argument("--kernel-scale", type=float, help="Nystrom, label propagation and kernel ridge scale")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--class-mass", action="store_true", help="class mass normalization for label propagation")
    p.add_argument("--out", help="labels CSV")
    p.set_defaults(func=cmd_baseline)

    p = commands.add_parser("experiment", help="run an experiment protocol from an INI file")
    p.add_argument("kind", choices=[k.value for k in ExperimentKind])
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report CSV (overrides [output] path)")
    p.set_defaults(func=cmd_experiment)

    p = commands.add_parser("serve", help="start the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ManifoldError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
