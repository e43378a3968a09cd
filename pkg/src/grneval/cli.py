"""Batch front end: configuration, subcommand dispatch, report serialization.

Configuration comes from an optional TOML file plus flag overrides (flags
win). All randomness flows from one explicit master seed. Exit codes: 0 on
success, 2 on configuration or usage errors, 3 on data errors. Wall-clock
timings go to stderr; report files embed them only with ``--timings`` so
that reruns with the same config and seed are byte-identical.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import sys
import time
from pathlib import Path

import click

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

from . import __version__
from .baselines import MethodConfig, run_method
from .dataset import load_dataset, save_dataset, stratified_split
from .errors import ConfigError, DataError
from .evaluation import EvalConfig, ReferenceNetwork, evaluate
from .graph import EdgeList
from .qc import QcConfig, apply_qc, read_knockdown_tsv
from .ranking import rank_models, read_scores_csv
from .synth import SyntheticSpec, gen_dag, sample_anm, validate_metrics


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValueError, tomllib.TOMLDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except (DataError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return wrapper


class AppContext:
    def __init__(self, config: dict, seed: int | None, out: str | None, threads: int, timings: bool):
        self.config = config
        self._seed = seed
        self._out = out
        self.threads = threads
        self.timings = timings

    @property
    def seed(self) -> int:
        if self._seed is not None:
            return self._seed
        return int(self.config.get("seed", 0))

    @property
    def out(self) -> Path:
        out = self._out or self.config.get("out", "out")
        return Path(out)

    def section(self, name: str) -> dict:
        value = self.config.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config section [{name}] must be a table")
        return value

    def get(self, section: str, key: str, override, default=None, required: bool = False):
        if override is not None:
            return override
        value = self.section(section).get(key, self.config.get(key, default))
        if required and value is None:
            raise ConfigError(f"missing required setting {section}.{key}")
        return value


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _stderr_timing(label: str, start: float) -> None:
    click.echo(f"{label} finished in {time.perf_counter() - start:.2f}s", err=True)


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=str, default=None, help="TOML config file.")
@click.option("--seed", type=int, default=None, help="Master seed; overrides the config.")
@click.option("--out", type=str, default=None, help="Output directory; overrides the config.")
@click.option("--threads", type=int, default=1, show_default=True, help="Worker threads.")
@click.option("--timings", is_flag=True, help="Embed wall-clock timings in report files.")
@click.pass_context
@_guarded
def main(ctx, config_path, seed, out, threads, timings):
    """Evaluation engine for gene-network inference on perturbational data."""
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    ctx.obj = AppContext(_load_config(config_path), seed, out, threads, timings)


def _qc_config(app: AppContext, **overrides) -> QcConfig:
    section = app.section("qc")
    values = {
        "de_alpha": section.get("de_alpha", 0.05),
        "min_de_genes": section.get("min_de_genes", 50),
        "min_cells": section.get("min_cells", 25),
        "min_knockdown": section.get("min_knockdown", 0.30),
        "cell_percentile": section.get("cell_percentile", 10.0),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return QcConfig(**values)


@main.command("qc")
@click.option("--dataset", "dataset_path", type=str, default=None)
@click.option("--min-cells", type=int, default=None)
@click.option("--min-de-genes", type=int, default=None)
@click.pass_obj
@_guarded
def cmd_qc(app: AppContext, dataset_path, min_cells, min_de_genes):
    """Filter a dataset and write the filtered directory plus qc_report.json."""
    start = time.perf_counter()
    dataset_path = app.get("qc", "dataset", dataset_path, required=True)
    cfg = _qc_config(app, min_cells=min_cells, min_de_genes=min_de_genes)
    knockdown = None
    knockdown_file = app.section("qc").get("knockdown_file")
    if knockdown_file:
        knockdown = read_knockdown_tsv(knockdown_file)

    ds = load_dataset(dataset_path)
    filtered, report = apply_qc(ds, cfg, knockdown=knockdown, threads=app.threads)
    out = app.out
    save_dataset(filtered, out / "filtered")
    payload = {
        "qc": report.to_json_dict(),
        "config": {
            "dataset": str(dataset_path),
            "de_alpha": cfg.de_alpha,
            "min_de_genes": cfg.min_de_genes,
            "min_cells": cfg.min_cells,
            "min_knockdown": cfg.min_knockdown,
            "cell_percentile": cfg.cell_percentile,
        },
        "engine_version": __version__,
        "timing_seconds": time.perf_counter() - start if app.timings else None,
    }
    _write_json(out / "qc_report.json", payload)
    click.echo(
        f"retained {len(report.retained)} of {len(report.per_label)} perturbations, "
        f"removed {report.cells_removed} cells"
    )
    _stderr_timing("qc", start)


@main.command("split")
@click.option("--dataset", "dataset_path", type=str, default=None)
@click.option("--fraction", type=float, default=None)
@click.pass_obj
@_guarded
def cmd_split(app: AppContext, dataset_path, fraction):
    """Stratified train/test split written as two dataset directories."""
    start = time.perf_counter()
    dataset_path = app.get("split", "dataset", dataset_path, required=True)
    fraction = float(app.get("split", "fraction", fraction, default=0.2))
    ds = load_dataset(dataset_path)
    split = stratified_split(ds, fraction, app.seed)
    out = app.out
    save_dataset(split.train, out / "train")
    save_dataset(split.test, out / "test")
    payload = {
        "fraction": fraction,
        "seed": app.seed,
        "n_train": split.train.n_cells,
        "n_test": split.test.n_cells,
        "engine_version": __version__,
    }
    _write_json(out / "split_report.json", payload)
    click.echo(f"train {split.train.n_cells} cells, test {split.test.n_cells} cells")
    _stderr_timing("split", start)


def _method_config(app: AppContext, method, k, lambda1, partition_size) -> MethodConfig:
    section = app.section("run")
    name = method or section.get("method")
    if not name:
        raise ConfigError("missing required setting run.method")
    psize = partition_size if partition_size is not None else section.get("partition_size")
    if psize is not None:
        psize = int(psize)
        if psize == -1:
            psize = None
    try:
        return MethodConfig(
            name=str(name),
            seed=app.seed,
            partition_size=psize,
            k=int(k if k is not None else section.get("k", 1000)),
            lambda1=float(lambda1 if lambda1 is not None else section.get("lambda1", 0.0)),
            max_outer_iters=int(section.get("max_outer_iters", 100)),
            h_tolerance=float(section.get("h_tolerance", 1e-8)),
            weight_threshold=float(section.get("weight_threshold", 0.3)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@main.command("run")
@click.option("--dataset", "dataset_path", type=str, default=None)
@click.option("--method", type=str, default=None)
@click.option("--k", type=int, default=None)
@click.option("--lambda1", type=float, default=None)
@click.option("--partition-size", type=int, default=None)
@click.pass_obj
@_guarded
def cmd_run(app: AppContext, dataset_path, method, k, lambda1, partition_size):
    """Run an inference method and write network.tsv plus run metadata."""
    start = time.perf_counter()
    dataset_path = app.get("run", "dataset", dataset_path, required=True)
    cfg = _method_config(app, method, k, lambda1, partition_size)
    ds = load_dataset(dataset_path)
    try:
        edges, meta = run_method(ds, cfg, threads=app.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = app.out
    out.mkdir(parents=True, exist_ok=True)
    edges.write_tsv(out / "network.tsv")
    payload = {
        "config": cfg.to_json_dict(),
        "dataset": str(dataset_path),
        "method_meta": meta,
        "n_edges": len(edges),
        "engine_version": __version__,
        "timing_seconds": time.perf_counter() - start if app.timings else None,
    }
    _write_json(out / "run_report.json", payload)
    click.echo(f"{cfg.name}: {len(edges)} edges")
    _stderr_timing("run", start)


@main.command("eval")
@click.option("--dataset", "dataset_path", type=str, default=None)
@click.option("--network", "network_path", type=str, default=None)
@click.option("--ref", "ref_paths", type=str, multiple=True)
@click.option("--n-pairs", type=int, default=None)
@click.option("--alpha", type=float, default=None)
@click.pass_obj
@_guarded
def cmd_eval(app: AppContext, dataset_path, network_path, ref_paths, n_pairs, alpha):
    """Score a predicted network and write eval_report.json.

    With a [split] config section the dataset is split first and scoring
    uses the held-out part; otherwise the full dataset is the test set.
    """
    start = time.perf_counter()
    dataset_path = app.get("eval", "dataset", dataset_path, required=True)
    network_path = app.get("eval", "network", network_path, required=True)
    refs_cfg = list(ref_paths) or list(app.section("eval").get("references", []))
    cfg = EvalConfig(
        n_pairs=int(app.get("eval", "n_pairs", n_pairs, default=500)),
        alpha=float(app.get("eval", "alpha", alpha, default=0.05)),
        seed=app.seed,
    )

    pred = EdgeList.read_tsv(network_path)
    ds = load_dataset(dataset_path)
    split_section = app.section("split")
    if split_section:
        test = stratified_split(ds, float(split_section.get("fraction", 0.2)), app.seed).test
    else:
        test = ds
    refs = [ReferenceNetwork.read_tsv(p) for p in refs_cfg]

    report = evaluate(pred, test, refs, cfg, threads=app.threads)
    _write_json(app.out / "eval_report.json", report.to_json_dict(embed_timing=app.timings))
    stat_w = report.stat_wasserstein
    stat_f = report.stat_for
    click.echo(
        f"mean_wasserstein={stat_w.mean_wasserstein:.6g} ({stat_w.n_evaluated} edges, "
        f"{stat_w.n_skipped} skipped) for={stat_f.for_rate:.6g} "
        f"({stat_f.n_pairs_tested} pairs) pooled_precision={report.bio.pooled.precision:.6g} "
        f"pooled_recall={report.bio.pooled.recall:.6g}"
    )
    _stderr_timing("eval", start)


def _synthetic_spec(app: AppContext, d) -> SyntheticSpec:
    section = app.section("synth")
    try:
        return SyntheticSpec(
            d=int(d if d is not None else section.get("d", 20)),
            graph_kind=str(section.get("graph_kind", "erdos_renyi")),
            edge_prob=float(section.get("edge_prob", 0.15)),
            attach_m=int(section.get("attach_m", 1)),
            rff_features=int(section.get("rff_features", 100)),
            length_scale=float(section.get("length_scale", 1.0)),
            noise_std=float(section.get("noise_std", 0.5)),
            intervention=str(section.get("intervention", "set_to_zero")),
            shift=float(section.get("shift", 2.0)),
            seed=app.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


@main.command("synth")
@click.option("--d", type=int, default=None)
@click.option("--repeats", type=int, default=None)
@click.option("--reg-values", type=str, default=None, help="Comma-separated sparsity strengths.")
@click.pass_obj
@_guarded
def cmd_synth(app: AppContext, d, repeats, reg_values):
    """Generate synthetic data and run the metric-validation sweep.

    Writes sweep.csv, the base dataset (data/train, data/test), and its
    ground-truth network truth.tsv.
    """
    start = time.perf_counter()
    section = app.section("synth")
    spec = _synthetic_spec(app, d)
    if reg_values is not None:
        regs = [float(v) for v in reg_values.split(",") if v.strip()]
    else:
        regs = [float(v) for v in section.get("reg_values", [0.025, 0.05, 0.1, 0.2, 0.5, 0.75, 1.0])]
    repeats = int(repeats if repeats is not None else section.get("repeats", 5))
    n_pairs = int(section.get("n_pairs", 500))
    alpha = float(section.get("alpha", 0.05))
    try:
        rows = validate_metrics(spec, regs, repeats, n_pairs=n_pairs, alpha=alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = app.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lambda", "repeat", "mean_w", "for", "shd", "n_edges"])
        for row in rows:
            writer.writerow(
                [row.lambda1, row.repeat, row.mean_wasserstein, row.for_rate, row.shd, row.n_edges]
            )

    data = sample_anm(gen_dag(spec), spec)
    save_dataset(data.train, out / "data" / "train")
    save_dataset(data.test, out / "data" / "test")
    truth_edges = EdgeList.from_pairs(
        (data.test.genes.names[a], data.test.genes.names[b]) for a, b in data.truth.edges()
    )
    truth_edges.write_tsv(out / "truth.tsv")
    click.echo(f"sweep complete: {len(rows)} runs over {len(regs)} regularization values")
    _stderr_timing("synth", start)


@main.command("rank")
@click.argument("score_csvs", nargs=-1, required=True, type=str)
@click.pass_obj
@_guarded
def cmd_rank(app: AppContext, score_csvs):
    """Rank models from ``model,metric,mean,std`` CSV files."""
    start = time.perf_counter()
    scores = read_scores_csv(score_csvs)
    try:
        board = rank_models(scores)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = app.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "scoreboard.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(board.to_csv())
    _write_json(out / "scoreboard.json", board.to_json_dict())
    for row in board.rows:
        click.echo(f"{row.mean_rank:6.2f}  {row.model}")
    _stderr_timing("rank", start)


if __name__ == "__main__":
    main()
