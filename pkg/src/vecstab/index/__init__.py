"""Exact and approximate near-neighbor search backends."""

from .brute import brute_force_batch, brute_force_topk
from .graph import GraphIndex, graph_build, graph_search, graph_search_batch
from .ivf import IvfIndex, default_nlist, default_nprobes, ivf_build, ivf_search, ivf_search_batch
from .results import SearchIndexError, SearchResult, mean_recall, recall_at_k
from .storage import load_index, save_index

__all__ = [
    "GraphIndex",
    "IvfIndex",
    "SearchIndexError",
    "SearchResult",
    "brute_force_batch",
    "brute_force_topk",
    "default_nlist",
    "default_nprobes",
    "graph_build",
    "graph_search",
    "graph_search_batch",
    "ivf_build",
    "ivf_search",
    "ivf_search_batch",
    "load_index",
    "mean_recall",
    "recall_at_k",
    "save_index",
]
