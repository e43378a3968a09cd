"""Evaluation engine and baselines for gene-network inference on
perturbational single-cell expression data.

The package covers the full loop: dataset ingestion and QC, reference
baselines, biological and interventional statistical scoring of predicted
networks, synthetic ground-truth validation of the metrics, and ranking of
competing methods.
"""

__version__ = "0.1.0"
