"""Transformation-aware patch embeddings for image provenance graphs.

The package covers the full pipeline: synthetic quadruplet data generation,
an embedding network trained with a rank-based quadruplet margin loss, patch
description and matching, pairwise image dissimilarity, spanning-tree graph
reconstruction, and graph-overlap scoring.
"""

__version__ = "0.1.0"
