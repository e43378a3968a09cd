"""Two-level quality control for perturbational datasets.

Cell level: a perturbed cell is dropped when its target gene is measured and
expressed strictly above the 10th percentile (nearest rank) of the control
distribution, i.e. the knockdown visibly failed in that cell. Unmeasured
targets are never filtered.

Perturbation level: a label is kept only when, on cell-filtered data, it
(a) retains a minimum number of cells, (b) induces a minimum number of
differentially expressed genes (Anderson-Darling per gene, then
Benjamini-Hochberg within the perturbation), and (c) reaches a minimum
on-target knockdown when one was measured.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import CONTROL_LABEL, PerturbDataset
from .errors import DataError
from .stats import anderson_darling_2s, benjamini_hochberg


@dataclass(frozen=True)
class QcConfig:
    de_alpha: float = 0.05
    min_de_genes: int = 50
    min_cells: int = 25
    min_knockdown: float = 0.30
    cell_percentile: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.de_alpha < 1.0:
            raise ValueError(f"de_alpha must be in (0, 1), got {self.de_alpha}")
        if not 0.0 < self.cell_percentile < 100.0:
            raise ValueError(f"cell_percentile must be in (0, 100), got {self.cell_percentile}")
        for name in ("min_de_genes", "min_cells", "min_knockdown"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class LabelQc:
    n_cells: int
    n_de_genes: int
    knockdown: float | None
    reasons: tuple[str, ...]  # empty iff the label is retained


@dataclass(frozen=True)
class QcReport:
    retained: tuple[str, ...]
    per_label: dict[str, LabelQc] = field(repr=False)
    cells_removed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "retained": list(self.retained),
            "cells_removed": self.cells_removed,
            "per_label": {
                label: {
                    "n_cells": qc.n_cells,
                    "n_de_genes": qc.n_de_genes,
                    "knockdown": qc.knockdown,
                    "reasons": list(qc.reasons),
                }
                for label, qc in sorted(self.per_label.items())
            },
        }


def nearest_rank_percentile(values: np.ndarray, percentile: float) -> float:
    """Value at order statistic ceil(p/100 * n), 1-indexed."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    rank = max(1, math.ceil(percentile / 100.0 * v.size))
    return float(v[rank - 1])


def read_knockdown_tsv(path) -> dict[str, float]:
    """Read the optional ``label<TAB>fraction`` knockdown sidecar."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    out: dict[str, float] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 'label<TAB>fraction'")
        try:
            out[fields[0]] = float(fields[1])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad fraction {fields[1]!r}") from exc
    return out


def filter_cells_on_target(ds: PerturbDataset, cfg: QcConfig) -> tuple[PerturbDataset, int]:
    """Drop perturbed cells whose measured target stayed above the control
    percentile threshold. Control cells and unmeasured targets are kept.
    """
    control = ds.control_mask()
    if not control.any():
        raise DataError("dataset has no control cells")
    remove = np.zeros(ds.n_cells, dtype=bool)
    for target in ds.targets():
        if target not in ds.genes:
            continue
        col = ds.genes.column(target)
        threshold = nearest_rank_percentile(ds.matrix[control, col], cfg.cell_percentile)
        rows = ds.labels == target
        remove |= rows & (ds.matrix[:, col] > threshold)
    kept = ds.take_rows(np.flatnonzero(~remove))
    return kept, int(remove.sum())


def _label_qc(
    ds: PerturbDataset,
    control_matrix: np.ndarray,
    label: str,
    cfg: QcConfig,
    knockdown: dict[str, float] | None,
) -> LabelQc:
    rows = ds.rows_for_label(label)
    pert = ds.matrix[rows]
    reasons = []
    if rows.size < cfg.min_cells:
        reasons.append("min_cells")

    n_de = 0
    if rows.size >= 5 and control_matrix.shape[0] >= 5:
        pvals = np.array(
            [
                anderson_darling_2s(pert[:, g], control_matrix[:, g]).p_value
                for g in range(ds.n_genes)
            ]
        )
        _, rejected = benjamini_hochberg(pvals, cfg.de_alpha)
        n_de = int(rejected.sum())
    if n_de < cfg.min_de_genes:
        reasons.append("de_genes")

    kd = None
    if knockdown is not None and label in knockdown:
        kd = float(knockdown[label])
        if kd < cfg.min_knockdown:
            reasons.append("knockdown")

    return LabelQc(n_cells=int(rows.size), n_de_genes=n_de, knockdown=kd, reasons=tuple(reasons))


def strong_perturbations(
    ds: PerturbDataset,
    cfg: QcConfig,
    knockdown: dict[str, float] | None = None,
    threads: int = 1,
) -> QcReport:
    """Screen perturbation labels on cell-filtered data.

    Applies :func:`filter_cells_on_target` first, then evaluates the three
    retention criteria per label. Labels failing any criterion are excluded
    with the reasons recorded.
    """
    filtered, removed = filter_cells_on_target(ds, cfg)
    control_matrix = filtered.matrix[filtered.control_mask()]
    labels = filtered.targets()

    def job(label: str) -> LabelQc:
        return _label_qc(filtered, control_matrix, label, cfg, knockdown)

    if threads > 1 and len(labels) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, labels))
    else:
        results = [job(label) for label in labels]

    per_label = dict(zip(labels, results))
    # labels whose every cell failed the cell filter vanish above; record them
    for label in ds.targets():
        if label not in per_label:
            per_label[label] = LabelQc(0, 0, None, ("min_cells",))
    retained = tuple(sorted(lab for lab, qc in per_label.items() if not qc.reasons))
    return QcReport(retained=retained, per_label=per_label, cells_removed=removed)


def apply_qc(
    ds: PerturbDataset,
    cfg: QcConfig,
    knockdown: dict[str, float] | None = None,
    threads: int = 1,
) -> tuple[PerturbDataset, QcReport]:
    """Cell-level filtering followed by the perturbation-level screen.

    The returned dataset keeps the control cells plus the cell-filtered
    cells of retained labels. Applying QC to its own output removes nothing.
    """
    report = strong_perturbations(ds, cfg, knockdown=knockdown, threads=threads)
    filtered, _ = filter_cells_on_target(ds, cfg)
    keep = filtered.control_mask() | np.isin(filtered.labels, report.retained)
    return filtered.take_rows(np.flatnonzero(keep)), report
