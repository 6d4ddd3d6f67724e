"""Experiment protocols (split sweep, iterative retraining, scale sweep), INI configuration and CSV reports."""

import configparser
import io
import logging
import math
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.models.baseline import ExtensionStrategy, StrategyTag
from app.models.dataset import Dataset
from app.models.experiment import DatasetKind, ExperimentConfig, ExperimentKind, ReportRow
from app.models.graph import NeighborTable
from app.services import baseline_service, sosi_service
from app.services.dataset_service import (PRESETS, load_image_dirs, load_matrix_csv, promote_labels,
                                          split_labels, synthetic_curves)
from app.services.embedding_service import embed, separable_pairs
from app.services.errors import ArgumentError, DegenerateRegularizerError, ManifoldError, ReportError
from app.services.graph_service import build_class_graphs, knn_neighbors
from app.services.rbf_service import (default_sigma_grid, fit_interpolator, parse_sigma_grid,
                                      regularization_terms)

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["experiment", "strategy", "x", "seed", "error_pct", "wall_ms"]
MEAN_SEED = "mean"


# ---------------------------------------------------------------------------
# configuration

def _split_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _parse_resize(text: str) -> Tuple[int, int]:
    try:
        width, height = text.lower().split("x")
        return int(width), int(height)
    except ValueError:
        raise ArgumentError(f"resize {text!r} is not of the form WxH")


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Build an ExperimentConfig from INI text; absent keys keep their defaults"""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ArgumentError(f"invalid configuration: {e}") from e

    def section(name: str) -> Dict[str, str]:
        return dict(parser[name]) if parser.has_section(name) else {}

    experiment, dataset = section("experiment"), section("dataset")
    graph, embedding, sosi = section("graph"), section("embedding"), section("sosi")
    baselines, output = section("baselines"), section("output")

    data: Dict = {}
    if "name" in experiment:
        data["name"] = experiment["name"]
    if "seeds" in experiment:
        data["seeds"] = _split_list(experiment["seeds"])
    if "ratios" in experiment:
        data["ratios"] = _split_list(experiment["ratios"])
    if "strategies" in experiment:
        try:
            data["strategies"] = [StrategyTag(s) for s in _split_list(experiment["strategies"])]
        except ValueError as e:
            raise ArgumentError(f"unknown strategy: {e}") from e

    if "resize" in dataset:
        dataset["resize"] = _parse_resize(dataset["resize"])
    if "per-class" in dataset:
        dataset["per_class"] = dataset.pop("per-class")
    data["dataset"] = dataset

    if "knn" in graph:
        data["knn"] = graph["knn"]
    if graph.get("sigma", "auto").strip().lower() != "auto":
        data["graph_sigma"] = graph["sigma"]

    for key in ("method", "dim", "mu"):
        if key in embedding:
            data[key] = embedding[key]

    sosi_data: Dict = {}
    renames = {"lambda": "weight", "kproj": "projection_neighbors", "early_stop": "early_stop_fraction",
               "reoptimize": "reoptimize_scales", "iterations": "iterations", "knn": "knn",
               "grid_size": "grid_size", "fisher_threshold": "fisher_threshold"}
    for key, field in renames.items():
        if key in sosi:
            sosi_data[field] = sosi[key]
    if "schedule" in sosi:
        sosi_data["schedule"] = _split_list(sosi["schedule"])
    if "sigma_grid" in sosi:
        sosi_data["sigma_grid"] = parse_sigma_grid(sosi["sigma_grid"])
    if "knn" not in sosi_data and "knn" in data:
        sosi_data["knn"] = data["knn"]
    data["sosi"] = sosi_data

    if "lle_neighbors" in baselines:
        data["lle_neighbors"] = baselines["lle_neighbors"]
    if "ridge" in baselines:
        data["ridge"] = baselines["ridge"]
    if "ssl_class_mass" in baselines:
        data["ssl_class_mass"] = parser.getboolean("baselines", "ssl_class_mass")

    if "path" in output:
        data["output"] = output["path"]
    if "timing" in output:
        data["timing"] = parser.getboolean("output", "timing")
    if "sigma_sweep" in output:
        data["sigma_sweep"] = parse_sigma_grid(output["sigma_sweep"])

    try:
        return apply_preset(ExperimentConfig.model_validate(data))
    except ValidationError as e:
        raise ArgumentError(f"invalid configuration: {e}") from e


def load_experiment_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ArgumentError(f"Cannot read configuration {path}: {e}") from e
    return parse_experiment_config(text)


def apply_preset(config: ExperimentConfig) -> ExperimentConfig:
    """Fill resolution, dimension, mu and early stop from the dataset preset unless set explicitly"""
    name = config.dataset.preset
    if name is None:
        return config
    if name not in PRESETS:
        raise ArgumentError(f"unknown dataset preset {name!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[name]
    updates: Dict = {}
    if "dim" not in config.model_fields_set:
        updates["dim"] = preset["dim"]
    if "mu" not in config.model_fields_set:
        updates["mu"] = preset["mu"]
    if config.dataset.resize is None:
        updates["dataset"] = config.dataset.model_copy(update={"resize": preset["resize"]})
    if "early_stop_fraction" not in config.sosi.model_fields_set:
        updates["sosi"] = config.sosi.model_copy(update={"early_stop_fraction": preset["early_stop_fraction"]})
    return config.model_copy(update=updates)


def build_dataset(config: ExperimentConfig) -> Dataset:
    spec = config.dataset
    if spec.kind is DatasetKind.SYNTHETIC:
        return synthetic_curves(spec.classes, spec.per_class, spec.noise, spec.seed, spec.gap)
    if spec.kind is DatasetKind.IMAGES:
        if spec.root is None or spec.resize is None:
            raise ArgumentError("image datasets need a root directory and a resize")
        return load_image_dirs(spec.root, spec.resize)
    if spec.features is None or spec.labels is None:
        raise ArgumentError("CSV datasets need features and labels files")
    return load_matrix_csv(spec.features, spec.labels, header=spec.header)


# ---------------------------------------------------------------------------
# protocols

class _Cell:
    """One (ratio, seed) split with its graphs and embedding"""

    def __init__(self, ds: Dataset, config: ExperimentConfig):
        self.ds = ds
        graphs = build_class_graphs(ds.training_samples, ds.training_labels, config.knn, config.graph_sigma)
        self.graph_scale = graphs.kernel_scale
        self.embedding = embed(graphs, config.method, config.dim, config.mu)


def _strategy(config: ExperimentConfig, tag: StrategyTag) -> ExtensionStrategy:
    return ExtensionStrategy(tag=tag, neighbors=config.lle_neighbors, ridge=config.ridge,
                             class_mass=config.ssl_class_mass)


def error_pct(predicted: np.ndarray, truth: np.ndarray) -> float:
    if len(truth) == 0:
        return 0.0
    return float(100.0 * np.mean(np.asarray(predicted) != np.asarray(truth)))


def _unlabeled_error(ds: Dataset, labels: np.ndarray) -> float:
    return error_pct(labels[ds.labeled_count:], ds.truth[ds.labeled_count:])


def _timed(config: ExperimentConfig, action: Callable):
    start = time.perf_counter()
    result = action()
    elapsed = 1000.0 * (time.perf_counter() - start)
    return result, (round(elapsed, 3) if config.timing else 0.0)


def _splits(config: ExperimentConfig):
    base = build_dataset(config)
    if base.truth is None and base.labeled_count != base.sample_count:
        raise ArgumentError("experiments need ground truth for every sample")
    for ratio in config.ratios:
        for seed in config.seeds:
            yield ratio, seed, split_labels(base, ratio, seed)


def _failed(config: ExperimentConfig, strategy: str, x: float, seed: int, reason) -> ReportRow:
    logger.warning(f"{config.name}: {strategy} failed at x={x:g}, seed={seed}: {reason}")
    return ReportRow(experiment=config.name, strategy=strategy, x=x, seed=seed)


def mean_rows(rows: List[ReportRow]) -> List[ReportRow]:
    """One mean row per (experiment, strategy, x) over the successful raw rows"""
    groups: Dict[Tuple[str, str, float], List[ReportRow]] = {}
    for row in rows:
        if row.seed is not None:
            groups.setdefault((row.experiment, row.strategy, row.x), []).append(row)
    means = []
    for (experiment, strategy, x), members in groups.items():
        ok = [r for r in members if r.error_pct is not None]
        regularizers = [r.regularizer for r in ok if r.regularizer is not None]
        means.append(ReportRow(
            experiment=experiment, strategy=strategy, x=x,
            error_pct=float(np.mean([r.error_pct for r in ok])) if ok else None,
            wall_ms=float(np.mean([r.wall_ms for r in ok])) if ok else 0.0,
            regularizer=float(np.mean(regularizers)) if regularizers else None))
    return means


def run_split_sweep(config: ExperimentConfig) -> List[ReportRow]:
    rows: List[ReportRow] = []
    for ratio, seed, ds in _splits(config):
        try:
            cell = _Cell(ds, config)
        except ManifoldError as e:
            rows.extend(_failed(config, tag.value, ratio, seed, e) for tag in config.strategies)
            continue
        for tag in config.strategies:
            try:
                state, wall = _timed(config, lambda: baseline_service.run_strategy(
                    _strategy(config, tag), ds, cell.embedding, config.sosi, cell.graph_scale))
            except ManifoldError as e:
                rows.append(_failed(config, tag.value, ratio, seed, e))
                continue
            err = _unlabeled_error(ds, state.labels)
            logger.info(f"{config.name}: {tag.value} ratio={ratio:g} seed={seed} error={err:.2f}%")
            rows.append(ReportRow(experiment=config.name, strategy=tag.value, x=ratio, seed=seed,
                                  error_pct=err, wall_ms=wall))
    return rows + mean_rows(rows)


def _sosi_retraining_rows(config: ExperimentConfig, ds: Dataset, cell: _Cell, seed: int,
                          schedule: List[int]) -> List[ReportRow]:
    N = ds.labeled_count
    try:
        result, wall = _timed(config, lambda: sosi_service.run(ds, cell.embedding, config.sosi))
    except ManifoldError as e:
        return [_failed(config, StrategyTag.SOSI.value, count / N, seed, e) for count in schedule]
    return [ReportRow(experiment=config.name, strategy=StrategyTag.SOSI.value, x=step.center_count / N,
                      seed=seed, error_pct=_unlabeled_error(ds, step.labels), wall_ms=wall)
            for step in result.trace]


def _baseline_retraining_rows(config: ExperimentConfig, ds: Dataset, cell: _Cell, seed: int,
                              tag: StrategyTag, schedule: List[int]) -> List[ReportRow]:
    """Classify, admit the most confident samples with their estimated labels, re-embed, repeat"""
    N = ds.labeled_count
    strategy = _strategy(config, tag)
    rows: List[ReportRow] = []
    current, embedding, scale = ds, cell.embedding, cell.graph_scale
    # position in ``current`` -> position in ``ds``
    positions = np.arange(ds.sample_count)
    for r, count in enumerate(schedule):
        try:
            if r > 0:
                waiting = np.arange(current.labeled_count, current.sample_count)
                order = np.lexsort((positions[waiting], -state.scores[waiting]))
                chosen = waiting[order[: count - current.labeled_count]]
                positions = np.concatenate([positions[: current.labeled_count], positions[chosen],
                                            positions[np.setdiff1d(waiting, chosen)]])
                current = promote_labels(current, chosen, state.labels[chosen])
                retrained = _Cell(current, config)
                embedding, scale = retrained.embedding, retrained.graph_scale
            state, wall = _timed(config, lambda: baseline_service.run_strategy(
                strategy, current, embedding, config.sosi, scale))
        except ManifoldError as e:
            rows.extend(_failed(config, tag.value, c / N, seed, e) for c in schedule[r:])
            break
        predicted = np.empty(ds.sample_count, dtype=int)
        predicted[positions] = state.labels
        rows.append(ReportRow(experiment=config.name, strategy=tag.value, x=count / N, seed=seed,
                              error_pct=_unlabeled_error(ds, predicted), wall_ms=wall))
    return rows


def run_iterative_retraining(config: ExperimentConfig) -> List[ReportRow]:
    if StrategyTag.SSL_GF in config.strategies:
        logger.info("Gaussian-fields propagation does not extend an embedding; skipped in retraining")
    strategies = [tag for tag in config.strategies if tag is not StrategyTag.SSL_GF]
    rows: List[ReportRow] = []
    for ratio, seed, ds in _splits(config):
        schedule = sosi_service.build_schedule(ds.labeled_count, ds.sample_count, config.sosi)
        try:
            cell = _Cell(ds, config)
        except ManifoldError as e:
            rows.extend(_failed(config, tag.value, count / ds.labeled_count, seed, e)
                        for tag in strategies for count in schedule)
            continue
        for tag in strategies:
            if tag is StrategyTag.SOSI:
                rows.extend(_sosi_retraining_rows(config, ds, cell, seed, schedule))
            else:
                rows.extend(_baseline_retraining_rows(config, ds, cell, seed, tag, schedule))
    return rows + mean_rows(rows)


def sweep_grid(config: ExperimentConfig, ds: Dataset, nbrs: NeighborTable) -> List[float]:
    """Configured scale grid, or the default grid of the split's training samples"""
    if config.sigma_sweep:
        return list(config.sigma_sweep)
    if config.sosi.sigma_grid:
        return list(config.sosi.sigma_grid)
    return default_sigma_grid(ds.training_samples, nbrs, config.sosi.grid_size)


def run_scale_sweep(config: ExperimentConfig) -> List[ReportRow]:
    """Common-scale training fits across the grid: regularizer value and unlabeled error per scale"""
    rows: List[ReportRow] = []
    strategy = StrategyTag.RBF_FIT.value
    for ratio, seed, ds in _splits(config):
        X, labels = ds.training_samples, ds.training_labels
        try:
            nbrs = knn_neighbors(X, min(config.sosi.knn, X.shape[0] - 1), labels)
            grid = sweep_grid(config, ds, nbrs)
        except ManifoldError as e:
            rows.append(_failed(config, strategy, ratio, seed, e))
            continue
        try:
            cell = _Cell(ds, config)
            pairs = separable_pairs(cell.embedding, labels)
        except ManifoldError as e:
            rows.extend(_failed(config, strategy, sigma, seed, e) for sigma in grid)
            continue
        for sigma in grid:
            try:
                (f, _), wall = _timed(config, lambda: fit_interpolator(
                    X, cell.embedding.coordinates, [sigma] * cell.embedding.dim))
                predicted, _ = sosi_service.nn_classify_confidence(f, X, labels, ds.unlabeled_samples)
            except ManifoldError as e:
                rows.append(_failed(config, strategy, sigma, seed, e))
                continue
            try:
                regularizer = regularization_terms(f, X, labels, nbrs, pairs, config.sosi.weight).total
            except DegenerateRegularizerError:
                regularizer = None
            err = error_pct(predicted, ds.truth[ds.labeled_count:])
            rows.append(ReportRow(experiment=config.name, strategy=strategy, x=sigma, seed=seed,
                                  error_pct=err, wall_ms=wall, regularizer=regularizer))
    return rows + mean_rows(rows)


PROTOCOLS: Dict[ExperimentKind, Callable[[ExperimentConfig], List[ReportRow]]] = {
    ExperimentKind.SPLIT_SWEEP: run_split_sweep,
    ExperimentKind.RETRAIN: run_iterative_retraining,
    ExperimentKind.SCALE_SWEEP: run_scale_sweep,
}


def run_experiment(kind: ExperimentKind, config: ExperimentConfig) -> List[ReportRow]:
    logger.info(f"Running {ExperimentKind(kind).value} experiment {config.name!r}")
    return PROTOCOLS[ExperimentKind(kind)](config)


# ---------------------------------------------------------------------------
# reports

def _sort_key(row: ReportRow):
    return row.strategy, row.x, row.seed is None, row.seed if row.seed is not None else 0


def report_frame(rows: List[ReportRow]) -> pd.DataFrame:
    ordered = sorted(rows, key=_sort_key)
    columns = list(REPORT_COLUMNS)
    if any(row.regularizer is not None for row in ordered):
        columns.append("regularizer")
    records = [{"experiment": row.experiment, "strategy": row.strategy, "x": row.x,
                "seed": MEAN_SEED if row.seed is None else str(row.seed),
                "error_pct": row.error_pct, "wall_ms": row.wall_ms, "regularizer": row.regularizer}
               for row in ordered]
    frame = pd.DataFrame.from_records(records, columns=columns)
    for column in columns:
        if column not in ("experiment", "strategy", "seed"):
            frame[column] = pd.to_numeric(frame[column])
    return frame


def report_csv(rows: List[ReportRow]) -> str:
    buffer = io.StringIO()
    report_frame(rows).to_csv(buffer, index=False, float_format="%.10g", lineterminator="\n")
    return buffer.getvalue()


def emit_report(rows: List[ReportRow], path) -> None:
    """Write rows as CSV sorted by (strategy, x, seed); mean rows follow the raw rows of their group"""
    try:
        Path(path).write_text(report_csv(rows))
    except OSError as e:
        raise ReportError(f"Cannot write report {path}: {e}") from e
    logger.info(f"Wrote {len(rows)} rows to {path}")


def _optional_float(value) -> Optional[float]:
    if value is None or (isinstance(value, float) and math.isnan(value)) or str(value).strip() == "":
        return None
    return float(value)


def read_report(path) -> List[ReportRow]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.EmptyDataError) as e:
        raise ReportError(f"Cannot read report {path}: {e}") from e
    missing = set(REPORT_COLUMNS) - set(frame.columns)
    if missing:
        raise ReportError(f"report {path} lacks columns {sorted(missing)}")
    rows = []
    for record in frame.to_dict(orient="records"):
        rows.append(ReportRow(
            experiment=record["experiment"], strategy=record["strategy"], x=float(record["x"]),
            seed=None if record["seed"] == MEAN_SEED else int(record["seed"]),
            error_pct=_optional_float(record["error_pct"]), wall_ms=float(record["wall_ms"]),
            regularizer=_optional_float(record.get("regularizer"))))
    return rows
