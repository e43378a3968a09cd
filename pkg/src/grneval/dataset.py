"""Perturbational expression datasets: in-memory model, disk format, splits.

A dataset directory contains:

    genes.tsv           one gene symbol per line; line order = column order
    interventions.tsv   one label per line; line order = row order;
                        the label "non-targeting" marks observational cells
    expression.mtx      Matrix Market coordinate file (rows = cells,
                        cols = genes), or
    expression.tsv      dense matrix with a header row of gene symbols

All files are UTF-8 with LF line endings. Values are normalized counts and
are accepted as-is; no re-normalization happens here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse

from .errors import DataError
from .seeding import derive_rng

#: Label of observational (control) cells.
CONTROL_LABEL = "non-targeting"


def round_half_up(x: float) -> int:
    """Rounding with .5 always going up, used for all per-stratum counts."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GeneTable:
    """Ordered gene symbols plus the inverse symbol-to-column map."""

    names: tuple[str, ...]
    index: dict[str, int] = field(repr=False)

    @classmethod
    def from_names(cls, names) -> "GeneTable":
        names = tuple(str(n) for n in names)
        index: dict[str, int] = {}
        for i, name in enumerate(names):
            if name in index:
                raise DataError(f"duplicate gene symbol {name!r}")
            index[name] = i
        return cls(names=names, index=index)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index

    def column(self, symbol: str) -> int:
        return self.index[symbol]


@dataclass(frozen=True)
class PerturbDataset:
    """Immutable cells x genes expression matrix with per-cell labels.

    Rows labelled :data:`CONTROL_LABEL` are observational samples; a row
    labelled with a gene symbol was measured under a knockdown of that gene.
    Perturbed genes need not be measured, so labels are not required to
    resolve against ``genes``.
    """

    matrix: np.ndarray
    labels: np.ndarray
    genes: GeneTable

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise DataError(f"expression matrix must be 2-D, got shape {matrix.shape}")
        labels = np.asarray(list(self.labels), dtype=str)
        if labels.shape[0] != matrix.shape[0]:
            raise DataError(
                f"row-count mismatch: {labels.shape[0]} labels vs {matrix.shape[0]} matrix rows"
            )
        if matrix.shape[1] != len(self.genes):
            raise DataError(
                f"column-count mismatch: {len(self.genes)} genes vs {matrix.shape[1]} matrix columns"
            )
        if matrix.size and not np.isfinite(matrix).all():
            raise DataError("expression matrix contains non-finite entries")
        if matrix.size and matrix.min() < 0:
            raise DataError("expression matrix contains negative entries")
        matrix.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "labels", labels)

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_genes(self) -> int:
        return self.matrix.shape[1]

    def control_mask(self) -> np.ndarray:
        return self.labels == CONTROL_LABEL

    def n_control(self) -> int:
        return int(self.control_mask().sum())

    def targets(self) -> tuple[str, ...]:
        """Distinct non-control labels, sorted."""
        return tuple(sorted(set(self.labels.tolist()) - {CONTROL_LABEL}))

    def label_counts(self) -> dict[str, int]:
        uniq, counts = np.unique(self.labels, return_counts=True)
        return {str(u): int(c) for u, c in zip(uniq, counts)}

    def rows_for_label(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def values(self, rows: np.ndarray, symbol: str) -> np.ndarray:
        """Expression of one measured gene over the given rows."""
        return self.matrix[rows, self.genes.column(symbol)]

    def take_rows(self, rows) -> "PerturbDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return PerturbDataset(self.matrix[rows], self.labels[rows], self.genes)

    def take_genes(self, cols) -> "PerturbDataset":
        cols = np.asarray(cols, dtype=np.intp)
        genes = GeneTable.from_names([self.genes.names[c] for c in cols])
        return PerturbDataset(self.matrix[:, cols], self.labels, genes)


@dataclass(frozen=True)
class DatasetSplit:
    train: PerturbDataset
    test: PerturbDataset
    fraction: float
    seed: int


def _read_lines(path: Path) -> list[str]:
    return path.read_text(encoding="utf-8").splitlines()


def _require(path: Path) -> Path:
    if not path.exists():
        raise DataError(f"missing file: {path}")
    return path


def _read_dense_tsv(path: Path) -> tuple[np.ndarray, list[str]]:
    lines = _read_lines(path)
    if not lines:
        raise DataError(f"{path}: empty expression file")
    header = lines[0].split("\t")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    matrix = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, len(header)))
    return matrix, header


def load_dataset(path) -> PerturbDataset:
    """Load a dataset directory (see module docstring for the layout)."""
    path = Path(path)
    names = _read_lines(_require(path / "genes.tsv"))
    genes = GeneTable.from_names(names)
    labels = _read_lines(_require(path / "interventions.tsv"))

    mtx = path / "expression.mtx"
    tsv = path / "expression.tsv"
    if mtx.exists():
        raw = scipy.io.mmread(str(mtx))
        matrix = raw.toarray() if scipy.sparse.issparse(raw) else np.asarray(raw)
    elif tsv.exists():
        matrix, header = _read_dense_tsv(tsv)
        if header != list(names):
            raise DataError(f"{tsv}: header row does not match genes.tsv")
    else:
        raise DataError(f"missing expression matrix (expression.mtx or expression.tsv) in {path}")

    try:
        return PerturbDataset(matrix=matrix, labels=labels, genes=genes)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_dataset(ds: PerturbDataset, path, matrix_format: str = "mtx") -> None:
    """Write a dataset directory that :func:`load_dataset` restores bit-exactly."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "genes.tsv").write_text("".join(f"{n}\n" for n in ds.genes.names), encoding="utf-8")
    (path / "interventions.tsv").write_text(
        "".join(f"{lab}\n" for lab in ds.labels), encoding="utf-8"
    )
    if matrix_format == "mtx":
        # 17 significant digits round-trip float64 exactly
        scipy.io.mmwrite(str(path / "expression.mtx"), scipy.sparse.coo_matrix(ds.matrix), precision=17)
    elif matrix_format == "tsv":
        with open(path / "expression.tsv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\t".join(ds.genes.names) + "\n")
            for row in ds.matrix:
                fh.write("\t".join(f"{v:.17g}" for v in row) + "\n")
    else:
        raise ValueError(f"unknown matrix_format {matrix_format!r}")


def _per_stratum_selection(ds: PerturbDataset, fraction: float, seed: int, stream: str):
    """Seeded per-stratum choice of round_half_up(fraction * n) rows.

    Yields (label, stratum_rows, chosen_rows); the chosen rows are the first
    k entries of the stratum permutation under the (seed, stream, label)
    substream, in original row order.
    """
    for label in sorted(set(ds.labels.tolist())):
        idx = ds.rows_for_label(label)
        k = round_half_up(fraction * idx.size)
        perm = derive_rng(seed, stream, label).permutation(idx.size)
        yield label, idx, np.sort(idx[perm[:k]])


def stratified_split(ds: PerturbDataset, fraction: float, seed: int) -> DatasetSplit:
    """Hold out round_half_up(fraction * n) cells per intervention label.

    Deterministic for a fixed seed; train and test partition the source rows.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    if ds.n_cells == 0:
        raise DataError("cannot split an empty dataset")
    test_mask = np.zeros(ds.n_cells, dtype=bool)
    for _, _, chosen in _per_stratum_selection(ds, fraction, seed, "split"):
        test_mask[chosen] = True
    train = ds.take_rows(np.flatnonzero(~test_mask))
    test = ds.take_rows(np.flatnonzero(test_mask))
    return DatasetSplit(train=train, test=test, fraction=fraction, seed=seed)


def subsample_cells(ds: PerturbDataset, fraction: float, seed: int) -> PerturbDataset:
    """Keep round_half_up(fraction * n) uniformly chosen cells per label."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    keep_mask = np.zeros(ds.n_cells, dtype=bool)
    for _, _, chosen in _per_stratum_selection(ds, fraction, seed, "subsample-cells"):
        keep_mask[chosen] = True
    return ds.take_rows(np.flatnonzero(keep_mask))


def subsample_interventions(ds: PerturbDataset, fraction: float, seed: int) -> PerturbDataset:
    """Keep all control cells plus the cells of a random fraction of targets.

    round_half_up(fraction * T) of the T distinct non-control targets are
    retained, sampled uniformly without replacement.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    targets = ds.targets()
    k = round_half_up(fraction * len(targets))
    rng = derive_rng(seed, "subsample-interventions")
    chosen = {targets[i] for i in rng.choice(len(targets), size=k, replace=False)} if targets else set()
    keep = ds.control_mask() | np.isin(ds.labels, sorted(chosen))
    return ds.take_rows(np.flatnonzero(keep))
