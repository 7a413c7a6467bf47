"""Experiment orchestration: method registry, runs, sweeps, persistence.

Every run is fully determined by its resolved configuration: each pipeline
stage derives its own seed from the base seed, so two methods sharing a base
seed also share their split and their training trajectory wherever their
pipelines coincide.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import bias as bias_mod
from . import metrics as metrics_mod
from . import partition as partition_mod
from . import trainer as trainer_mod
from .corpus import AttributeSchema, Corpus, load_corpus, sample_seed_set, split
from .embeddings import EmbeddingTable, load_embeddings

METHODS: dict[str, str] = {
    "bac": "plain regularized classifier, no bias head",
    "badr": "no bias head; per-label regularization scaled by cluster disparity",
    "bas": "bias head with labels from full attribute annotations",
    "bacp": "bias head with labels from per-label-group k-means disparity",
    "basav": "bias head; seed-set attribute classifiers label the rest",
    "basav-knn": "bias head; seed-set nearest-neighbour propagation labels the rest",
}

SWEEPABLE: dict[str, set[str]] = {
    "alpha": {"basav", "basav-knn"},
    "epsilon_cluster": {"bacp", "basav", "basav-knn"},
    "epsilon_annot": {"bas"},
    "knn_k": {"basav-knn"},
    "beta": {"bac", "bas", "bacp", "basav", "basav-knn"},
    "beta0": {"badr"},
    "lambda": {"bas", "bacp", "basav", "basav-knn"},
}

_STAGE_CODES = {"split": 0, "seed-set": 1, "kmeans": 2, "attr-clf": 3, "train": 4}

ENV_DATA_DIR = "FAIRMTL_DATA_DIR"

RESULT_SCHEMA_VERSION = 1


class PipelineError(RuntimeError):
    """A component failure annotated with the pipeline stage it occurred in."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def stage_seed(base: int, stage: str, index: int = 0) -> int:
    """Stable per-stage sub-seed, independent of stage execution order."""
    entropy = (base & 0xFFFFFFFF, _STAGE_CODES[stage], index)
    return int(np.random.SeedSequence(entropy=entropy).generate_state(1)[0])


@dataclass
class RunConfig:
    """Resolved configuration of one run; the flat JSON key space mirrors
    these fields, with ``lambda`` as the public name of ``bias_weight``."""

    method: str
    corpus: str = ""
    embeddings: str = ""
    attributes: list[tuple[str, list[str]]] = field(default_factory=list)
    label_names: list[str] | None = None
    units: list[str] | None = None
    train_fraction: float = 0.8
    seed: int = 7
    alpha: float = 0.2
    epsilon_annot: float = 0.5
    epsilon_cluster: float = 0.35
    knn_k: int = 3
    knn_scope: str = "global"
    beta: float = 0.01
    beta0: float = 0.1
    global_beta: bool = False
    bias_weight: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    bias_objective: str = "invert"
    l2_form: str = "squared"
    bias_head_input: str = "probs"
    attr_epochs: int = 200
    attr_learning_rate: float = 0.1
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    tokenizer: str = "simple"
    eval_split: str = "test"
    dw: bool = False

    def __post_init__(self) -> None:
        self.method = self.method.lower().replace("_", "-")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; known: {sorted(METHODS)}")
        if self.eval_split not in ("test", "all"):
            raise ValueError("eval_split must be 'test' or 'all'")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["lambda"] = out.pop("bias_weight")
        out["attributes"] = [[name, list(values)] for name, values in self.attributes]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        data = dict(data)
        if "lambda" in data:
            data["bias_weight"] = data.pop("lambda")
        if "attributes" in data:
            data["attributes"] = [(name, list(values)) for name, values in data["attributes"]]
        known = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def schema(self) -> AttributeSchema:
        return AttributeSchema.from_pairs(list(self.attributes))

    @property
    def display_name(self) -> str:
        name = self.method.upper()
        return f"{name}-DW" if self.dw else name


@dataclass
class RunResult:
    method: str
    display_name: str
    config: dict[str, Any]
    report: metrics_mod.EvalReport
    artifacts: dict[str, Any]
    loss_trace: list[tuple[int, float, float, float]]
    wall_clock_s: float
    checkpoint: str

    def report_csv(self) -> str:
        return metrics_mod.report_csv([(self.display_name, self.report)])

    def to_payload(self) -> dict[str, Any]:
        """JSON-serialisable summary (checkpoint excluded)."""
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "method": self.method,
            "display_name": self.display_name,
            "config": self.config,
            "report": {
                "accuracy": self.report.accuracy,
                "n_test": self.report.n_test,
                "units": [
                    {
                        "label": u.label,
                        "label_name": u.label_name,
                        "attribute": u.attribute,
                        "attribute_name": u.attribute_name,
                        "counts": list(u.counts),
                        "fairness": u.fairness,
                        "gamma": u.gamma,
                    }
                    for u in self.report.units
                ],
            },
            "artifacts": self.artifacts,
            "loss_trace": [list(row) for row in self.loss_trace],
            "wall_clock_s": self.wall_clock_s,
        }


def report_from_payload(payload: dict[str, Any]) -> tuple[str, metrics_mod.EvalReport]:
    """Rebuild (display name, EvalReport) from a persisted run payload."""
    rep = payload["report"]
    units = tuple(
        metrics_mod.UnitResult(
            label=u["label"],
            label_name=u["label_name"],
            attribute=u["attribute"],
            attribute_name=u["attribute_name"],
            counts=tuple(u["counts"]),
            fairness=u["fairness"],
            gamma=u["gamma"],
        )
        for u in rep["units"]
    )
    report = metrics_mod.EvalReport(accuracy=rep["accuracy"], units=units, n_test=rep["n_test"])
    return payload.get("display_name", payload.get("method", "?")), report


def resolve_data_path(path: str) -> Path:
    """Resolve against the cwd first, then $FAIRMTL_DATA_DIR."""
    p = Path(path)
    if p.is_absolute() or p.exists():
        return p
    data_dir = os.environ.get(ENV_DATA_DIR)
    if data_dir:
        candidate = Path(data_dir) / p
        if candidate.exists():
            return candidate
    return p


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_units(corpus: Corpus) -> list[str]:
    labels = set(corpus.label_names)
    attrs = set(corpus.schema.names)
    if {"fear", "anger"} <= labels and {"gender", "race"} <= attrs:
        return ["fear:gender", "fear:race", "anger:gender"]
    return [f"{corpus.label_names[0]}:{name}" for name in corpus.schema.names]


def resolve_units(corpus: Corpus, units: list[str] | None) -> list[tuple[int, int]]:
    names = units if units is not None else default_units(corpus)
    out = []
    for name in names:
        if ":" not in name:
            raise ValueError(f"unit {name!r} is not of the form label:attribute")
        label_name, attr_name = name.split(":", 1)
        if label_name not in corpus.label_names:
            raise ValueError(f"unknown label {label_name!r} in unit {name!r}")
        if attr_name not in corpus.schema.names:
            raise ValueError(f"unknown attribute {attr_name!r} in unit {name!r}")
        out.append(
            (corpus.label_names.index(label_name), corpus.schema.names.index(attr_name))
        )
    return out


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc


def _kmeans_partitions(
    train: Corpus, cfg: RunConfig
) -> list[partition_mod.PartitionAssignment]:
    k = train.schema.combination_count
    parts = []
    for group in partition_mod.group_by_label(train):
        result = partition_mod.cluster_label_group(
            train,
            group,
            k,
            seed=stage_seed(cfg.seed, "kmeans", group.label),
            max_iter=cfg.kmeans_max_iter,
            tol=cfg.kmeans_tol,
            n_init=cfg.kmeans_restarts,
        )
        parts.append(result.partition)
    return parts


def _seeded_attribute_partitions(
    train: Corpus, cfg: RunConfig, artifacts: dict[str, Any]
) -> list[partition_mod.PartitionAssignment]:
    schema = train.schema
    seed_split = sample_seed_set(train, cfg.alpha, stage_seed(cfg.seed, "seed-set"))
    artifacts["seed_set_size"] = len(seed_split.seed_set)
    attrs = np.full((len(train), schema.attribute_count), -1, dtype=np.int64)
    attrs[list(seed_split.seed_indices)] = seed_split.seed_set.attribute_matrix()
    if cfg.method == "basav-knn":
        inferred = partition_mod.knn_propagate(
            seed_split.seed_set, seed_split.rest, cfg.knn_k, cfg.knn_scope
        )
    else:
        clf = partition_mod.train_attribute_classifier(
            seed_split.seed_set,
            epochs=cfg.attr_epochs,
            learning_rate=cfg.attr_learning_rate,
            seed=stage_seed(cfg.seed, "attr-clf"),
        )
        inferred = partition_mod.infer_attributes(clf, seed_split.rest)
    if len(seed_split.rest_indices):
        attrs[list(seed_split.rest_indices)] = inferred
    return [
        partition_mod.attributes_to_partition(group, attrs, schema)
        for group in partition_mod.group_by_label(train)
    ]


def run_method(
    cfg: RunConfig,
    corpus: Corpus | None = None,
    table: EmbeddingTable | None = None,
) -> RunResult:
    """Execute the full pipeline for one method and one configuration.

    ``corpus`` (already embedded) may be passed directly, bypassing the file
    stages; otherwise ``cfg.corpus`` and ``cfg.embeddings`` are loaded.
    """
    started = time.perf_counter()
    artifacts: dict[str, Any] = {}

    if corpus is None:
        if table is None:
            table = _stage(
                "load-embeddings", load_embeddings, resolve_data_path(cfg.embeddings)
            )
        corpus = _stage(
            "load-corpus",
            load_corpus,
            resolve_data_path(cfg.corpus),
            table,
            cfg.schema(),
            label_names=cfg.label_names,
            tokenizer=cfg.tokenizer,
        )

    train_set, test_set = _stage("split", split, corpus, cfg.train_fraction, stage_seed(cfg.seed, "split"))

    labeling: bias_mod.BiasLabeling | None = None
    beta: float | dict[int, float] = cfg.beta
    bias_head = cfg.method not in ("bac", "badr")

    if cfg.method == "badr":
        parts = _stage("cluster", _kmeans_partitions, train_set, cfg)
        beta_map = _stage("dynamic-beta", bias_mod.dynamic_beta, parts, cfg.beta0, cfg.global_beta)
        beta = beta_map
        artifacts["partition_sizes"] = {
            train_set.label_names[p.label]: p.sizes for p in parts if p.label is not None
        }
        artifacts["dynamic_beta"] = {
            train_set.label_names[label]: value for label, value in sorted(beta_map.items())
        }
    elif cfg.method == "bas":
        labeling = _stage(
            "bias-labels",
            bias_mod.bias_labels_from_annotations,
            train_set,
            train_set.schema,
            cfg.epsilon_annot,
        )
    elif cfg.method == "bacp":
        parts = _stage("cluster", _kmeans_partitions, train_set, cfg)
        artifacts["partition_sizes"] = {
            train_set.label_names[p.label]: p.sizes for p in parts if p.label is not None
        }
        labeling = _stage(
            "bias-labels",
            lambda: bias_mod.merge_labelings(
                [bias_mod.bias_labels_from_partition(p, cfg.epsilon_cluster) for p in parts]
            ),
        )
    elif cfg.method in ("basav", "basav-knn"):
        parts = _stage("partition", _seeded_attribute_partitions, train_set, cfg, artifacts)
        artifacts["partition_sizes"] = {
            train_set.label_names[p.label]: p.sizes for p in parts if p.label is not None
        }
        labeling = _stage(
            "bias-labels",
            lambda: bias_mod.merge_labelings(
                [bias_mod.bias_labels_from_partition(p, cfg.epsilon_cluster) for p in parts]
            ),
        )

    if labeling is not None:
        artifacts["bias_label_positives"] = labeling.positives()
        artifacts["bias_label_total"] = len(labeling.labels)

    train_config = trainer_mod.TrainConfig(
        beta=beta,
        bias_weight=cfg.bias_weight,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=stage_seed(cfg.seed, "train"),
        bias_head=bias_head,
        bias_objective=cfg.bias_objective,
        l2_form=cfg.l2_form,
        bias_input=cfg.bias_head_input,
    )
    trained = _stage("train", trainer_mod.train, train_set, labeling, train_config)
    artifacts["clamp_events"] = trained.clamp_events

    eval_corpus = corpus if cfg.eval_split == "all" else test_set
    units = _stage("evaluate", resolve_units, eval_corpus, cfg.units)
    report = _stage("evaluate", metrics_mod.evaluate, trained.model, eval_corpus, units)

    return RunResult(
        method=cfg.method,
        display_name=cfg.display_name,
        config=cfg.to_dict(),
        report=report,
        artifacts=artifacts,
        loss_trace=trained.trace,
        wall_clock_s=time.perf_counter() - started,
        checkpoint=trainer_mod.dump_model(trained.model),
    )


@dataclass
class SweepResult:
    parameter: str
    rows: list[dict[str, Any]]
    csv_text: str


def _set_parameter(cfg: RunConfig, parameter: str, value: float) -> RunConfig:
    key = "bias_weight" if parameter == "lambda" else parameter
    if parameter == "knn_k":
        value = int(value)
    return replace(cfg, **{key: value})


def sweep(
    cfg: RunConfig,
    parameter: str,
    values: list[float],
    repeats: int = 1,
    corpus: Corpus | None = None,
    table: EmbeddingTable | None = None,
) -> SweepResult:
    """Grid sweep over one parameter with per-value repeat seeds.

    Emits one row per (value, seed, unit) plus mean/stddev summary rows per
    (value, unit).  Undefined fairness values are skipped in the summaries.
    """
    if parameter not in SWEEPABLE:
        raise ValueError(f"unknown sweep parameter {parameter!r}; known: {sorted(SWEEPABLE)}")
    if cfg.method not in SWEEPABLE[parameter]:
        raise ValueError(f"parameter {parameter!r} does not apply to method {cfg.method!r}")
    if not values:
        raise ValueError("no sweep values given")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")

    rows: list[dict[str, Any]] = []
    for value in values:
        cfg_value = _set_parameter(cfg, parameter, value)
        per_unit: dict[str, dict[str, list[float]]] = {}
        for r in range(repeats):
            cfg_run = replace(cfg_value, seed=cfg.seed + r)
            result = run_method(cfg_run, corpus=corpus, table=table)
            for unit in result.report.units:
                unit_name = f"{unit.label_name}:{unit.attribute_name}"
                rows.append(
                    {
                        "method": result.display_name,
                        "parameter": parameter,
                        "value": value,
                        "seed": cfg_run.seed,
                        "unit": unit_name,
                        "accuracy": result.report.accuracy,
                        "F": unit.fairness,
                        "gamma": unit.gamma,
                        "row_type": "run",
                    }
                )
                bucket = per_unit.setdefault(unit_name, {"accuracy": [], "F": [], "gamma": []})
                bucket["accuracy"].append(result.report.accuracy)
                if unit.fairness is not None:
                    bucket["F"].append(unit.fairness)
                if unit.gamma is not None:
                    bucket["gamma"].append(unit.gamma)
        for unit_name, bucket in per_unit.items():
            for row_type, agg in (("mean", np.mean), ("stddev", np.std)):
                rows.append(
                    {
                        "method": cfg.display_name,
                        "parameter": parameter,
                        "value": value,
                        "seed": "",
                        "unit": unit_name,
                        "accuracy": float(agg(bucket["accuracy"])),
                        "F": float(agg(bucket["F"])) if bucket["F"] else None,
                        "gamma": float(agg(bucket["gamma"])) if bucket["gamma"] else None,
                        "row_type": row_type,
                    }
                )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "parameter", "value", "seed", "unit", "accuracy", "F", "gamma", "row_type"])
    for row in rows:
        writer.writerow(
            [
                row["method"],
                row["parameter"],
                row["value"],
                row["seed"],
                row["unit"],
                _fmt_float(row["accuracy"]),
                _fmt_float(row["F"]),
                _fmt_float(row["gamma"]),
                row["row_type"],
            ]
        )
    return SweepResult(parameter=parameter, rows=rows, csv_text=buf.getvalue())


def _fmt_float(value: float | None) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and (math.isnan(value) or math.isinf(value)):
        return ""
    return f"{value:.6f}"


def dump_json(payload: dict[str, Any]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
