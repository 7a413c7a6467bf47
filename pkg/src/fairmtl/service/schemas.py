"""Request/response models for the fairmtl service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..harness import RunConfig


class AttributePair(BaseModel):
    name: str
    values: list[str] = Field(min_length=2)


class RunRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    method: str
    corpus: str
    embeddings: str
    attributes: list[AttributePair]
    label_names: Optional[list[str]] = None
    units: Optional[list[str]] = None
    train_fraction: float = 0.8
    seed: int = 7
    alpha: float = 0.2
    epsilon_annot: float = 0.5
    epsilon_cluster: float = 0.35
    knn_k: int = 3
    knn_scope: Literal["global", "per-label"] = "global"
    beta: float = 0.01
    beta0: float = 0.1
    global_beta: bool = False
    bias_weight: float = Field(1.0, alias="lambda")
    learning_rate: float = 0.05
    epochs: int = 300
    batch_size: int = 32
    bias_objective: Literal["subtract", "invert"] = "invert"
    l2_form: Literal["squared", "plain"] = "squared"
    bias_head_input: Literal["probs", "embedding"] = "probs"
    attr_epochs: int = 200
    attr_learning_rate: float = 0.1
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-6
    tokenizer: Literal["simple", "whitespace"] = "simple"
    eval_split: Literal["test", "all"] = "test"
    dw: bool = False

    def to_config(self) -> RunConfig:
        data = self.model_dump(by_alias=True)
        data["attributes"] = [(a["name"], a["values"]) for a in data["attributes"]]
        return RunConfig.from_dict(data)


class UnitReport(BaseModel):
    label: int
    label_name: str
    attribute: int
    attribute_name: str
    counts: list[int]
    fairness: Optional[float]
    gamma: Optional[float]


class Report(BaseModel):
    accuracy: float
    n_test: int
    units: list[UnitReport]


class RunResponse(BaseModel):
    schema_version: int
    method: str
    display_name: str
    config: dict[str, Any]
    report: Report
    artifacts: dict[str, Any]
    loss_trace: list[list[float]]
    wall_clock_s: float
    report_csv: str
    checkpoint: str


class SweepRequest(RunRequest):
    parameter: str
    values: list[float] = Field(min_length=1)
    repeats: int = 1


class SweepResponse(BaseModel):
    parameter: str
    rows: list[dict[str, Any]]
    csv_text: str


class SynthRequest(BaseModel):
    label_count: int = 4
    label_names: Optional[list[str]] = None
    attributes: list[AttributePair] = Field(
        default_factory=lambda: [
            AttributePair(name="attr0", values=["v0", "v1"]),
            AttributePair(name="attr1", values=["v0", "v1"]),
        ]
    )
    per_cell: int = 50
    separation: float = 10.0
    bias: float = 0.0
    sigma: float = 1.0
    dimension: int = 10
    seed: int = 1
    biased_labels: list[int] = Field(default_factory=lambda: [0])
    designated_combo: Optional[int] = None


class SynthResponse(BaseModel):
    corpus_csv: str
    embeddings_txt: str
    n_instances: int
    label_names: list[str]
    combination_count: int


class ReportRequest(BaseModel):
    results: list[dict[str, Any]] = Field(min_length=1)


class ReportResponse(BaseModel):
    table: str
    csv_text: str


class MethodsResponse(BaseModel):
    methods: dict[str, str]
    note: str


class HealthResponse(BaseModel):
    status: str
    version: str
