"""Scoring of predicted networks.

Two evaluation families:

* biological: undirected precision/recall of the predicted edges against
  reference gene-pair networks exported from interaction databases;
* statistical: the mean Wasserstein distance over predicted edges between
  each target's interventional and control expression, and the false
  omission rate of predicted non-edges under Mann-Whitney U tests.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import GeneTable, PerturbDataset
from .errors import DataError
from .graph import EdgeList, from_edge_list, sample_negative_pairs
from .stats import mann_whitney_u, wasserstein_1d


@dataclass(frozen=True)
class ReferenceNetwork:
    """Undirected putatively-true gene pairs from a database export."""

    name: str
    pairs: frozenset[tuple[str, str]]  # tuples sorted, no self-pairs

    @classmethod
    def from_pairs(cls, name: str, pairs) -> "ReferenceNetwork":
        norm = set()
        for a, b in pairs:
            a, b = str(a), str(b)
            if a == b:
                continue
            norm.add((a, b) if a < b else (b, a))
        return cls(name=name, pairs=frozenset(norm))

    @classmethod
    def read_tsv(cls, path, name: str | None = None) -> "ReferenceNetwork":
        path = Path(path)
        if not path.exists():
            raise DataError(f"missing file: {path}")
        pairs = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise DataError(f"{path}:{lineno}: expected 'geneA<TAB>geneB'")
            pairs.append((fields[0], fields[1]))
        return cls.from_pairs(name or path.stem, pairs)


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    n_predicted: int
    n_reference_in_universe: int
    n_hits: int
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "n_predicted": self.n_predicted,
            "n_reference_in_universe": self.n_reference_in_universe,
            "n_hits": self.n_hits,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class BioScore:
    per_ref: dict[str, PrecisionRecall] = field(repr=False)
    pooled: PrecisionRecall = None  # type: ignore[assignment]

    def to_json_dict(self) -> dict:
        return {
            "per_ref": {name: pr.to_json_dict() for name, pr in sorted(self.per_ref.items())},
            "pooled": self.pooled.to_json_dict(),
        }


@dataclass(frozen=True)
class WassersteinScore:
    mean_wasserstein: float  # NaN when no edge could be evaluated
    n_evaluated: int
    n_skipped: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class OmissionScore:
    for_rate: float  # NaN when no negative pair could be sampled
    n_pairs_tested: int
    n_pairs_rejected: int
    alpha: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class EvalConfig:
    n_pairs: int = 500
    alpha: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class EvalReport:
    bio: BioScore
    stat_wasserstein: WassersteinScore
    stat_for: OmissionScore
    seed: int
    config: dict
    timing_seconds: float
    engine_version: str = __version__

    def to_json_dict(self, embed_timing: bool = False) -> dict:
        """Report as a JSON-ready dict.

        ``timing_seconds`` is null unless ``embed_timing`` is set: wall
        clock varies between runs and would break byte-identical reports.
        """

        def _num(x: float):
            return None if np.isnan(x) else x

        return {
            "bio": self.bio.to_json_dict(),
            "stat": {
                "mean_wasserstein": _num(self.stat_wasserstein.mean_wasserstein),
                "n_evaluated": self.stat_wasserstein.n_evaluated,
                "n_skipped": self.stat_wasserstein.n_skipped,
                "wasserstein_flags": list(self.stat_wasserstein.flags),
                "for_rate": _num(self.stat_for.for_rate),
                "n_pairs": self.stat_for.n_pairs_tested,
                "n_rejected": self.stat_for.n_pairs_rejected,
                "for_flags": list(self.stat_for.flags),
                "alpha": self.stat_for.alpha,
                "seed": self.seed,
            },
            "timing_seconds": self.timing_seconds if embed_timing else None,
            "config": self.config,
            "engine_version": self.engine_version,
        }


def _undirected_pairs(pred: EdgeList) -> set[tuple[str, str]]:
    pairs = set()
    for src, tgt, _ in pred.edges:
        if src == tgt:
            continue
        pairs.add((src, tgt) if src < tgt else (tgt, src))
    return pairs


def _precision_recall(pred_pairs: set, ref_pairs: set) -> PrecisionRecall:
    hits = len(pred_pairs & ref_pairs)
    flags = []
    if not pred_pairs:
        flags.append("empty_prediction")
    if not ref_pairs:
        flags.append("empty_reference")
    precision = hits / len(pred_pairs) if pred_pairs else 0.0
    recall = hits / len(ref_pairs) if ref_pairs else 0.0
    return PrecisionRecall(
        precision=precision,
        recall=recall,
        n_predicted=len(pred_pairs),
        n_reference_in_universe=len(ref_pairs),
        n_hits=hits,
        flags=tuple(flags),
    )


def bio_precision_recall(pred: EdgeList, refs, genes: GeneTable) -> BioScore:
    """Undirected precision/recall against each reference and their pooled union.

    Predictions are deduplicated as unordered pairs; references are
    restricted to pairs fully inside the gene universe so recall is
    attainable in principle.
    """
    pred_pairs = _undirected_pairs(pred)
    per_ref: dict[str, PrecisionRecall] = {}
    pooled_pairs: set[tuple[str, str]] = set()
    for ref in refs:
        restricted = {p for p in ref.pairs if p[0] in genes and p[1] in genes}
        pooled_pairs |= restricted
        per_ref[ref.name] = _precision_recall(pred_pairs, restricted)
    return BioScore(per_ref=per_ref, pooled=_precision_recall(pred_pairs, pooled_pairs))


def _directed_pairs(pred: EdgeList) -> list[tuple[str, str]]:
    return sorted({(src, tgt) for src, tgt, _ in pred.edges})


def mean_wasserstein_score(
    pred: EdgeList,
    test: PerturbDataset,
    genes: GeneTable | None = None,
    threads: int = 1,
) -> WassersteinScore:
    """Mean Wasserstein distance over evaluable predicted edges.

    An edge A -> B is evaluable when A has interventional cells in the test
    data and B is measured; it then scores the distance between B's
    expression under the knockdown of A and under control. Other edges are
    skipped and counted, so sparse predictions cannot hide behind skips.
    """
    genes = genes or test.genes
    control_rows = np.flatnonzero(test.control_mask())
    if control_rows.size == 0:
        raise DataError("test data has no control cells")

    edges = _directed_pairs(pred)
    label_rows = {src: test.rows_for_label(src) for src, _ in edges}
    evaluable = [
        (src, tgt) for src, tgt in edges if tgt in genes and label_rows[src].size > 0
    ]
    n_skipped = len(edges) - len(evaluable)

    def job(edge: tuple[str, str]) -> float:
        src, tgt = edge
        col = genes.column(tgt)
        return wasserstein_1d(test.matrix[label_rows[src], col], test.matrix[control_rows, col])

    if threads > 1 and len(evaluable) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            dists = list(pool.map(job, evaluable))
    else:
        dists = [job(e) for e in evaluable]

    if not dists:
        return WassersteinScore(float("nan"), 0, n_skipped, flags=("no_evaluable_edges",))
    return WassersteinScore(float(np.mean(dists)), len(dists), n_skipped)


def false_omission_rate(
    pred: EdgeList,
    test: PerturbDataset,
    genes: GeneTable | None = None,
    n_pairs: int = 500,
    alpha: float = 0.05,
    seed: int = 0,
    threads: int = 1,
) -> OmissionScore:
    """Fraction of sampled predicted-negative pairs that reject the MWU null.

    Negative pairs (A, B) have no predicted path from A to B, with A drawn
    from the genes intervened in the test data; a two-sided Mann-Whitney U
    test with p below ``alpha`` marks a false negative.
    """
    genes = genes or test.genes
    control_rows = np.flatnonzero(test.control_mask())
    if control_rows.size == 0:
        raise DataError("test data has no control cells")
    sources = sorted(genes.column(t) for t in test.targets() if t in genes)
    if not sources:
        raise DataError("test data has no intervened genes in the gene universe")

    graph, _ = from_edge_list(pred, genes)
    sample = sample_negative_pairs(graph, sources, n_pairs, seed)
    flags = ("pair_sample_exhausted",) if sample.exhausted else ()
    if not sample.pairs:
        return OmissionScore(float("nan"), 0, 0, alpha, flags=("no_negative_pairs",) + flags)

    label_rows = {a: test.rows_for_label(genes.names[a]) for a in {p[0] for p in sample.pairs}}

    def job(pair: tuple[int, int]) -> bool:
        a, b = pair
        res = mann_whitney_u(test.matrix[label_rows[a], b], test.matrix[control_rows, b])
        return res.p_value < alpha

    if threads > 1 and len(sample.pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rejected = list(pool.map(job, sample.pairs))
    else:
        rejected = [job(p) for p in sample.pairs]

    n_rejected = int(np.sum(rejected))
    return OmissionScore(n_rejected / len(sample.pairs), len(sample.pairs), n_rejected, alpha, flags)


def evaluate(
    pred: EdgeList,
    test: PerturbDataset,
    refs=(),
    cfg: EvalConfig = EvalConfig(),
    threads: int = 1,
) -> EvalReport:
    """Run both evaluation families and bundle the scores into a report."""
    start = time.perf_counter()
    bio = bio_precision_recall(pred, refs, test.genes)
    wscore = mean_wasserstein_score(pred, test, threads=threads)
    fscore = false_omission_rate(
        pred, test, n_pairs=cfg.n_pairs, alpha=cfg.alpha, seed=cfg.seed, threads=threads
    )
    elapsed = time.perf_counter() - start
    config_echo = {
        "n_pairs": cfg.n_pairs,
        "alpha": cfg.alpha,
        "references": sorted(r.name for r in refs),
    }
    return EvalReport(
        bio=bio,
        stat_wasserstein=wscore,
        stat_for=fscore,
        seed=cfg.seed,
        config=config_echo,
        timing_seconds=elapsed,
    )
