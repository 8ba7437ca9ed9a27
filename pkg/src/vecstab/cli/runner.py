"""Execute an :class:`ExperimentConfig` and collect report rows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import generators as gen
from ..aggregation import MultiVectorProblem, agg_distance_matrix
from ..filtered import FilteredPoint, FilterKind, mismatch_matrix
from ..index import (
    brute_force_batch,
    default_nlist,
    default_nprobes,
    graph_build,
    graph_search_batch,
    ivf_build,
    ivf_search_batch,
    mean_recall,
)
from ..stability import StabilityReport, report_from_matrix, verdict
from ..validators import validate_multivector, validate_sparse
from ..vectors import as_matrix, pairwise_distances, sparse_pairwise_l2
from . import io
from .config import ConfigError, ExperimentConfig
from .report import ReportRow


@dataclass
class RunOutput:
    rows: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)  # label -> [StabilityReport]
    details: dict = field(default_factory=dict)  # label -> {dimension: validation object}
    messages: list = field(default_factory=list)

    def add(self, label: str, dim: int, stat: str, value: float, n: int) -> None:
        self.rows.append(ReportRow(label, dim, stat, value, n))

    def add_report(self, rep: StabilityReport, n_pairs: int | None = None) -> None:
        n_pairs = rep.n_queries * rep.n_docs if n_pairs is None else n_pairs
        self.add(rep.config_label, rep.dimension, "relvar", rep.relvar, n_pairs)
        self.add(rep.config_label, rep.dimension, "ratio_median", rep.ratio_median, rep.per_query_ratio.size)
        self.add(rep.config_label, rep.dimension, "ratio_p10", rep.ratio_p10, rep.per_query_ratio.size)
        self.reports.setdefault(rep.config_label, []).append(rep)

    def verdicts(self) -> dict:
        return {label: verdict(reps) for label, reps in self.reports.items() if len(reps) >= 2}


def _sub(label: str, part: str) -> str:
    return f"{label}/{part}" if label else part


def _gen_params(cfg: ExperimentConfig) -> dict:
    return dict(cfg.generator.params) if cfg.generator else {}


# ---------------------------------------------------------------------------
# dense sweeps and recall


def _dense_split(cfg: ExperimentConfig, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    fn = {
        "iid_gaussian": gen.gen_iid_gaussian,
        "clustered": gen.gen_clustered,
        "equal_component": gen.gen_equal_component,
    }[cfg.generator.name]
    data = fn(cfg.n_queries + cfg.n_docs, m, seed=seed, **_gen_params(cfg))
    return gen.split_queries(data, cfg.n_queries)


def _dense_inputs(cfg: ExperimentConfig):
    q = io.read_dense(cfg.inputs.queries)
    d = io.read_dense(cfg.inputs.docs)
    if q.shape[1] != d.shape[1]:
        raise io.DataError(f"query dim {q.shape[1]} != doc dim {d.shape[1]}")
    return q, d


def _dense_cells(cfg: ExperimentConfig):
    if cfg.inputs is not None:
        q, d = _dense_inputs(cfg)
        yield q.shape[1], q, d
    else:
        for m in cfg.dims:
            q, d = _dense_split(cfg, m, cfg.seed)
            yield m, q, d


def run_sweep(cfg: ExperimentConfig, out: RunOutput) -> None:
    metric = cfg.metric_obj
    for m, q, d in _dense_cells(cfg):
        out.add_report(report_from_matrix(pairwise_distances(q, d, metric), m, cfg.label))


def run_recall(cfg: ExperimentConfig, out: RunOutput) -> None:
    metric, ix = cfg.metric_obj, cfg.index
    for m, q, d in _dense_cells(cfg):
        exact = brute_force_batch(q, d, metric, 10)
        n = d.shape[0]
        if "ivf" in ix.kinds:
            nlist = ix.nlist or default_nlist(n)
            nprobes = ix.nprobes or default_nprobes(n)
            if nlist > n or nprobes > nlist:
                raise ConfigError(f"index: need nprobes <= nlist <= n_docs, got {nprobes}, {nlist}, {n}")
            index = ivf_build(d, nlist, metric, cfg.seed)
            r = mean_recall(ivf_search_batch(index, q, nprobes, 10), exact)
            out.add(_sub(cfg.label, "ivf"), m, "recall_at_10", r, q.shape[0])
        if "graph" in ix.kinds:
            g = graph_build(d, ix.M, ix.ef_construction, metric, cfg.seed, heuristic=ix.heuristic)
            r = mean_recall(graph_search_batch(g, q, ix.ef_search, 10), exact)
            out.add(_sub(cfg.label, "graph"), m, "recall_at_10", r, q.shape[0])


# ---------------------------------------------------------------------------
# multi-vector


def _multivec_cells(cfg: ExperimentConfig):
    if cfg.inputs is not None:
        qs, _ = io.read_sets(cfg.inputs.queries)
        ds, _ = io.read_sets(cfg.inputs.docs)
        try:
            problem = MultiVectorProblem(qs, ds, cfg.metric_obj)
        except ValueError as exc:
            raise io.DataError(str(exc)) from exc
        yield problem.dim, problem
        return
    params = _gen_params(cfg)
    for m in cfg.dims:
        problem = gen.gen_antipodal_multivec(cfg.n_docs, cfg.n_queries, m=m, seed=cfg.seed, **params)
        if cfg.metric_obj != problem.metric:
            problem = MultiVectorProblem(problem.queries, problem.documents, cfg.metric_obj)
        yield m, problem


def _multivec_validation(label: str, m: int, problem: MultiVectorProblem, out: RunOutput) -> None:
    v = validate_multivector(problem)
    nq_vec = sum(len(s) for s in problem.queries)
    out.add(label, m, "c", v.c, nq_vec)
    out.add(label, m, "nondegeneracy_rate", v.nondegeneracy_pass_rate, nq_vec)
    out.add(label, m, "cov_sum", v.covariance_sum, len(problem.queries) * len(problem.documents))
    out.details.setdefault(label, {})[m] = v


def run_multivec(cfg: ExperimentConfig, out: RunOutput) -> None:
    for m, problem in _multivec_cells(cfg):
        for agg in cfg.agg:
            rep = report_from_matrix(agg_distance_matrix(problem, agg), m, _sub(cfg.label, agg))
            out.add_report(rep)
        _multivec_validation(_sub(cfg.label, "conditions"), m, problem, out)


# ---------------------------------------------------------------------------
# filtered


def _filtered_cells(cfg: ExperimentConfig):
    if cfg.inputs is not None:
        q, d = _dense_inputs(cfg)
        qa = io.join_attrs(list(range(q.shape[0])), io.read_attrs(cfg.inputs.query_attrs))
        da = io.join_attrs(list(range(d.shape[0])), io.read_attrs(cfg.inputs.doc_attrs))
        yield q.shape[1], [FilteredPoint(v, a) for v, a in zip(q, qa)], [FilteredPoint(v, a) for v, a in zip(d, da)]
        return
    for m in cfg.dims:
        q, d = gen.gen_filtered(cfg.n_docs, cfg.n_queries, m, cfg.p_mismatch, cfg.seed)
        yield m, q, d


def _alpha_tag(a: float) -> str:
    return "alpha=inf" if math.isinf(a) else f"alpha={a:g}"


def run_filtered(cfg: ExperimentConfig, out: RunOutput) -> None:
    metric, kind = cfg.metric_obj, FilterKind(cfg.filter_kind)
    for m, q, d in _filtered_cells(cfg):
        mismatch = mismatch_matrix(q, d, kind)
        out.add(cfg.label, m, "p_mismatch", float(mismatch.mean()), mismatch.size)
        base = pairwise_distances(as_matrix([x.vector for x in q]), as_matrix([x.vector for x in d]), metric)
        for a in cfg.alpha:
            if math.isinf(a):
                mat = np.ma.masked_array(base, mask=mismatch)
            else:
                mat = base + a * mismatch
            out.add_report(report_from_matrix(mat, m, _sub(cfg.label, _alpha_tag(a))), int(np.ma.count(mat)))


# ---------------------------------------------------------------------------
# sparse


def _sparse_validation(label: str, m: int, q, d, cfg: ExperimentConfig, out: RunOutput) -> None:
    c = validate_sparse(q, d, cfg.kappa, cfg.alpha_target, cfg.rho_target, cfg.p, seed=cfg.seed)
    n_pairs = len(q) * len(d)
    out.add(label, m, "rho", c.rho, len(d))
    out.add(label, m, "gamma", c.gamma, min(n_pairs, 10_000))
    out.add(label, m, "pi_hat", c.pi_hat, min(n_pairs, 10_000))
    out.add(label, m, "tau", c.tau, len(q) + len(d))
    if c.applicable:
        for stat, v in (("X", c.X), ("Y", c.Y), ("gap", c.gap), ("relvar_bound", c.relvar_bound)):
            out.add(label, m, stat, v, min(n_pairs, 10_000))
    else:
        out.messages.append(f"{label} m={m}: assumptions failed: {', '.join(c.failures)}")
    out.details.setdefault(label, {})[m] = c


def _sparse_cells(cfg: ExperimentConfig):
    if cfg.inputs is not None:
        q, _ = io.read_sparse(cfg.inputs.queries)
        d, _ = io.read_sparse(cfg.inputs.docs)
        dims = {v.dim for v in q + d}
        if len(dims) != 1:
            raise io.DataError(f"sparse inputs mix dimensions {sorted(dims)}")
        yield "", dims.pop(), q, d
        return
    params = _gen_params(cfg)
    for regime in cfg.regime:
        for m in cfg.dims:
            data = gen.gen_sparse_semantic(
                cfg.n_queries + cfg.n_docs, m, regime=gen.SparseRegime(regime), seed=cfg.seed, p=cfg.p, **params
            )
            yield regime, m, data[: cfg.n_queries], data[cfg.n_queries :]


def run_sparse(cfg: ExperimentConfig, out: RunOutput) -> None:
    if cfg.p != 2.0:
        raise ConfigError("sparse sweeps compute l2 distances; set p = 2")
    for regime, m, q, d in _sparse_cells(cfg):
        label = _sub(cfg.label, regime) if regime else cfg.label
        out.add_report(report_from_matrix(sparse_pairwise_l2(q, d), m, label))
        _sparse_validation(label, m, q, d, cfg, out)


# ---------------------------------------------------------------------------
# validate


def run_validate(cfg: ExperimentConfig, out: RunOutput) -> None:
    fmt = "sets" if cfg.generator and cfg.generator.name == "antipodal_multivec" else cfg.input_format
    if cfg.generator and cfg.generator.name == "sparse_semantic":
        fmt = "sparse"
    if fmt == "sets":
        for m, problem in _multivec_cells(cfg):
            _multivec_validation(cfg.label, m, problem, out)
    else:
        for regime, m, q, d in _sparse_cells(cfg):
            _sparse_validation(_sub(cfg.label, regime) if regime else cfg.label, m, q, d, cfg, out)


RUNNERS: dict[str, Callable[[ExperimentConfig, RunOutput], None]] = {
    "sweep": run_sweep,
    "recall": run_recall,
    "multivec": run_multivec,
    "filtered": run_filtered,
    "sparse": run_sparse,
    "validate": run_validate,
}


def run(cfg: ExperimentConfig) -> RunOutput:
    """Execute every cell of ``cfg`` in a fixed order."""
    if cfg.kind not in RUNNERS:
        raise ConfigError(f"kind {cfg.kind!r} does not produce a report")
    out = RunOutput()
    RUNNERS[cfg.kind](cfg, out)
    return out


# ---------------------------------------------------------------------------
# gen


def generate(cfg: ExperimentConfig, path) -> list[Path]:
    """Write the generator's output for ``dims[0]``; returns the files written.

    Companion files share the stem: ``<stem>.queries<suffix>`` for query
    collections and ``<stem>.attrs.jsonl`` / ``<stem>.queries.attrs.jsonl`` for
    filter attributes.
    """
    path = Path(path)
    m = cfg.dims[0]
    name, params = cfg.generator.name, _gen_params(cfg)
    qpath = path.with_name(f"{path.stem}.queries{path.suffix}")
    if name in ("iid_gaussian", "clustered", "equal_component"):
        q, d = _dense_split(cfg, m, cfg.seed)
        io.write_dense(path, d)
        io.write_dense(qpath, q)
        return [path, qpath]
    if name == "antipodal_multivec":
        pr = gen.gen_antipodal_multivec(cfg.n_docs, cfg.n_queries, m=m, seed=cfg.seed, **params)
        io.write_sets(path, [s.vectors for s in pr.documents])
        io.write_sets(qpath, [s.vectors for s in pr.queries])
        return [path, qpath]
    if name == "filtered":
        q, d = gen.gen_filtered(cfg.n_docs, cfg.n_queries, m, cfg.p_mismatch, cfg.seed)
        io.write_dense(path, [x.vector for x in d])
        io.write_dense(qpath, [x.vector for x in q])
        dattr = path.with_name(f"{path.stem}.attrs.jsonl")
        qattr = path.with_name(f"{path.stem}.queries.attrs.jsonl")
        io.write_attrs(dattr, range(len(d)), [x.attrs for x in d])
        io.write_attrs(qattr, range(len(q)), [x.attrs for x in q])
        return [path, qpath, dattr, qattr]
    regime = gen.SparseRegime(cfg.regime[0])
    data = gen.gen_sparse_semantic(cfg.n_queries + cfg.n_docs, m, regime=regime, seed=cfg.seed, p=cfg.p, **params)
    io.write_sparse(path, data[cfg.n_queries :])
    io.write_sparse(qpath, data[: cfg.n_queries])
    return [path, qpath]
