"""Experiment configuration: one JSON document, strictly validated.

Unknown keys are rejected at every nesting level. Exactly one of ``generator``
and ``inputs`` must be present.
"""

from __future__ import annotations

import dataclasses
import inspect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import generators as gen
from ..aggregation import AVG_POOL, CHAMFER
from ..filtered import FilterKind
from ..vectors import Metric, VectorError

KINDS = ("sweep", "multivec", "filtered", "sparse", "recall", "validate", "gen")

GENERATORS = {
    "iid_gaussian": gen.gen_iid_gaussian,
    "clustered": gen.gen_clustered,
    "equal_component": gen.gen_equal_component,
    "antipodal_multivec": gen.gen_antipodal_multivec,
    "filtered": gen.gen_filtered,
    "sparse_semantic": gen.gen_sparse_semantic,
}

# generator arguments the runner fills in itself
_RUNNER_ARGS = {"n", "m", "n_docs", "n_queries", "seed", "regime", "p_mismatch", "return_labels", "p"}

ALLOWED_GENERATORS = {
    "sweep": {"iid_gaussian", "clustered", "equal_component"},
    "recall": {"iid_gaussian", "clustered"},
    "multivec": {"antipodal_multivec"},
    "filtered": {"filtered"},
    "sparse": {"sparse_semantic"},
    "validate": {"antipodal_multivec", "sparse_semantic"},
    "gen": set(GENERATORS),
}

INPUT_FORMATS = ("dense", "sparse", "sets")
DEFAULT_FORMAT = {"sweep": "dense", "recall": "dense", "filtered": "dense", "multivec": "sets", "sparse": "sparse"}

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class InputSpec:
    queries: str
    docs: str
    format: str | None = None
    query_attrs: str | None = None
    doc_attrs: str | None = None


@dataclass(frozen=True)
class IndexSpec:
    kinds: tuple = ("ivf", "graph")
    nlist: int | None = None
    nprobes: int | None = None
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 200
    heuristic: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    label: str = ""
    generator: GeneratorSpec | None = None
    inputs: InputSpec | None = None
    dims: tuple = ()
    n_docs: int = 10_000
    n_queries: int = 100
    metric: str = "l2"
    agg: tuple = (CHAMFER, AVG_POOL)
    alpha: tuple = (0.0,)
    p_mismatch: float = 0.5
    filter_kind: str = "subset"
    regime: tuple = tuple(r.value for r in gen.SparseRegime)
    kappa: int = 8
    alpha_target: float = 0.83
    rho_target: float = 0.9
    p: float = 2.0
    index: IndexSpec = field(default_factory=IndexSpec)
    seed: int = 0
    out: str | None = None

    @property
    def metric_obj(self) -> Metric:
        return Metric.parse(self.metric)

    @property
    def input_format(self) -> str | None:
        if self.inputs is None:
            return None
        return self.inputs.format or DEFAULT_FORMAT.get(self.kind)

    def to_json(self) -> dict:
        """Plain JSON types; infinite penalties are spelled ``"inf"`` as in config files."""
        return _jsonable(dataclasses.asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# ---------------------------------------------------------------------------
# parsing helpers


def _fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls)}


def _strict(obj: Any, cls, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = set(obj) - set(_fields(cls))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return dict(obj)


def _int(x, where: str, lo: int | None = None) -> int:
    if not isinstance(x, int) or isinstance(x, bool):
        raise ConfigError(f"{where}: expected an integer, got {x!r}")
    if lo is not None and x < lo:
        raise ConfigError(f"{where}: must be >= {lo}, got {x}")
    return x


def _num(x, where: str) -> float:
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    if not isinstance(x, (int, float)) or isinstance(x, bool) or math.isnan(x):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _str(x, where: str) -> str:
    if not isinstance(x, str):
        raise ConfigError(f"{where}: expected a string, got {x!r}")
    return x


def _listify(x) -> list:
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _parse_generator(obj) -> GeneratorSpec:
    d = _strict(obj, GeneratorSpec, "generator")
    if "name" not in d:
        raise ConfigError("generator: missing 'name'")
    name = _str(d["name"], "generator.name")
    if name not in GENERATORS:
        raise ConfigError(f"generator.name: unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("generator.params: expected a JSON object")
    fn = GENERATORS[name]
    accepted = set(inspect.signature(fn).parameters) - _RUNNER_ARGS - {"overrides"}
    if name == "sparse_semantic":
        accepted |= set(gen.sparse_defaults())
    unknown = set(params) - accepted
    if unknown:
        raise ConfigError(f"generator.params: unknown key(s) {sorted(unknown)} for {name}")
    return GeneratorSpec(name, dict(params))


def _parse_inputs(obj) -> InputSpec:
    d = _strict(obj, InputSpec, "inputs")
    for key in ("queries", "docs"):
        if key not in d:
            raise ConfigError(f"inputs: missing {key!r}")
    for key, v in d.items():
        if v is not None:
            _str(v, f"inputs.{key}")
    if d.get("format") is not None and d["format"] not in INPUT_FORMATS:
        raise ConfigError(f"inputs.format: must be one of {INPUT_FORMATS}")
    return InputSpec(**d)


def _parse_index(obj) -> IndexSpec:
    d = _strict(obj, IndexSpec, "index")
    if "kinds" in d:
        kinds = tuple(_str(k, "index.kinds") for k in _listify(d["kinds"]))
        bad = set(kinds) - {"ivf", "graph"}
        if bad or not kinds:
            raise ConfigError(f"index.kinds: choose a non-empty subset of ['graph', 'ivf'], got {list(kinds)}")
        d["kinds"] = kinds
    for key in ("nlist", "nprobes"):
        if d.get(key) is not None:
            d[key] = _int(d[key], f"index.{key}", 1)
    d["M"] = _int(d.get("M", 16), "index.M", 2)
    for key in ("ef_construction", "ef_search"):
        d[key] = _int(d.get(key, 200), f"index.{key}", 1)
    if d["ef_search"] < 10:
        raise ConfigError("index.ef_search: must be >= 10 for recall@10")
    if not isinstance(d.get("heuristic", True), bool):
        raise ConfigError("index.heuristic: expected true or false")
    return IndexSpec(**d)


def parse_config(obj: dict, *, kind: str | None = None) -> ExperimentConfig:
    """Validate a decoded JSON document. ``kind`` (from the subcommand) fills or
    must agree with the document's ``kind``."""
    d = _strict(obj, ExperimentConfig, "config")
    doc_kind = d.get("kind")
    if doc_kind is not None:
        _str(doc_kind, "kind")
    if kind is not None and doc_kind is not None and doc_kind != kind:
        raise ConfigError(f"config kind {doc_kind!r} does not match subcommand {kind!r}")
    d["kind"] = kind or doc_kind
    if d["kind"] not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}, got {d['kind']!r}")
    k = d["kind"]

    if ("generator" in d and d["generator"] is not None) == ("inputs" in d and d["inputs"] is not None):
        raise ConfigError("exactly one of 'generator' and 'inputs' is required")
    if d.get("generator") is not None:
        d["generator"] = _parse_generator(d["generator"])
        if d["generator"].name not in ALLOWED_GENERATORS[k]:
            raise ConfigError(
                f"generator {d['generator'].name!r} cannot drive a {k!r} run; "
                f"use one of {sorted(ALLOWED_GENERATORS[k])}"
            )
    else:
        if k == "gen":
            raise ConfigError("gen needs a generator, not inputs")
        d["inputs"] = _parse_inputs(d["inputs"])
        if k == "validate" and d["inputs"].format not in ("sparse", "sets"):
            raise ConfigError("validate inputs need format 'sparse' or 'sets'")
        if k == "filtered" and (d["inputs"].query_attrs is None or d["inputs"].doc_attrs is None):
            raise ConfigError("filtered inputs need query_attrs and doc_attrs")

    if "label" in d:
        _str(d["label"], "label")
    if "dims" in d:
        d["dims"] = tuple(_int(m, "dims", 1) for m in _listify(d["dims"]))
        if any(b <= a for a, b in zip(d["dims"], d["dims"][1:])):
            raise ConfigError("dims: must be strictly increasing")
    if d.get("generator") is not None and not d.get("dims"):
        raise ConfigError("dims: a non-empty list is required with a generator")
    for key in ("n_docs", "n_queries"):
        if key in d:
            d[key] = _int(d[key], key, 1)
    if "metric" in d:
        try:
            Metric.parse(_str(d["metric"], "metric"))
        except VectorError as exc:
            raise ConfigError(f"metric: {exc}") from exc
    if "agg" in d:
        d["agg"] = tuple(_str(a, "agg") for a in _listify(d["agg"]))
        if not d["agg"] or set(d["agg"]) - {CHAMFER, AVG_POOL}:
            raise ConfigError(f"agg: choose from {[CHAMFER, AVG_POOL]}")
    if "alpha" in d:
        d["alpha"] = tuple(_num(a, "alpha") for a in _listify(d["alpha"]))
        if not d["alpha"] or any(a < 0 for a in d["alpha"]):
            raise ConfigError("alpha: need one or more values >= 0 (or \"inf\")")
    if "p_mismatch" in d:
        d["p_mismatch"] = _num(d["p_mismatch"], "p_mismatch")
        if not 0 < d["p_mismatch"] < 1:
            raise ConfigError("p_mismatch: must lie in (0, 1)")
    if "filter_kind" in d:
        try:
            FilterKind(_str(d["filter_kind"], "filter_kind"))
        except ValueError as exc:
            raise ConfigError(f"filter_kind: choose from {[f.value for f in FilterKind]}") from exc
    if "regime" in d:
        d["regime"] = tuple(_str(r, "regime") for r in _listify(d["regime"]))
        valid = [r.value for r in gen.SparseRegime]
        if not d["regime"] or set(d["regime"]) - set(valid):
            raise ConfigError(f"regime: choose from {valid}")
    if "kappa" in d:
        d["kappa"] = _int(d["kappa"], "kappa", 1)
    for key in ("alpha_target", "rho_target"):
        if key in d:
            d[key] = _num(d[key], key)
            if not 0 < d[key] < 1:
                raise ConfigError(f"{key}: must lie in (0, 1)")
    if "p" in d:
        d["p"] = _num(d["p"], "p")
        if not (d["p"] >= 1 and math.isfinite(d["p"])):
            raise ConfigError("p: must be a finite number >= 1")
    if "index" in d:
        d["index"] = _parse_index(d["index"])
    if "seed" in d:
        d["seed"] = _int(d["seed"], "seed", 0)
        if d["seed"] > MAX_SEED:
            raise ConfigError("seed: must fit in 64 bits")
    if d.get("out") is not None:
        _str(d["out"], "out")
    return ExperimentConfig(**d)


def load_config(path, *, kind: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} ({exc.msg})") from exc
    return parse_config(obj, kind=kind)
