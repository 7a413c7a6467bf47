"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from fairmtl.corpus import AttributeSchema, Corpus, Instance, SyntheticSpec, make_synthetic
from fairmtl.embeddings import EmbeddingTable


def schema_2x2(names: tuple[str, str] = ("gender", "race")) -> AttributeSchema:
    values = {
        "gender": ["male", "female"],
        "race": ["caucasian", "african_american"],
    }
    return AttributeSchema.from_pairs(
        [(n, values.get(n, [f"{n}_0", f"{n}_1"])) for n in names]
    )


def tiny_table(d: int = 3) -> EmbeddingTable:
    vecs = {
        "cat": np.array([1.0, 0.0, 0.0]),
        "dog": np.array([0.0, 1.0, 0.0]),
        "bird": np.array([0.0, 0.0, 1.0]),
        "fish": np.array([1.0, 1.0, 0.0]),
    }
    for v in vecs.values():
        v.flags.writeable = False
    return EmbeddingTable(dimension=3, vectors=vecs)


def manual_corpus(
    vectors: np.ndarray,
    labels: list[int],
    attrs: list[tuple[int, ...] | None],
    schema: AttributeSchema | None = None,
    label_names: tuple[str, ...] | None = None,
) -> Corpus:
    """Corpus straight from arrays, one synthetic token per instance."""
    schema = schema or schema_2x2()
    if label_names is None:
        label_names = tuple(f"label_{i}" for i in range(max(labels) + 1))
    instances = []
    for i, (vec, y, z) in enumerate(zip(np.asarray(vectors, dtype=np.float64), labels, attrs)):
        vec = vec.copy()
        vec.flags.writeable = False
        instances.append(Instance(tokens=(f"t{i:04d}",), x=vec, y=y, z=z))
    return Corpus(label_names, schema, tuple(instances))


def planted(
    label_count: int = 4,
    per_cell: int = 25,
    separation: float = 10.0,
    bias: float = 0.0,
    dimension: int = 10,
    sigma: float = 1.0,
    seed: int = 11,
    biased_labels: tuple[int, ...] = (0,),
    schema: AttributeSchema | None = None,
) -> Corpus:
    spec = SyntheticSpec(
        label_count=label_count,
        schema=schema or schema_2x2(),
        per_cell=per_cell,
        separation=separation,
        bias=bias,
        dimension=dimension,
        sigma=sigma,
        biased_labels=biased_labels,
    )
    return make_synthetic(spec, seed)


def wcss(x: np.ndarray, assignment: np.ndarray, k: int) -> float:
    """Within-cluster sum of squares for a given assignment."""
    total = 0.0
    for j in range(k):
        members = x[assignment == j]
        if len(members):
            total += float(((members - members.mean(axis=0)) ** 2).sum())
    return total


def brute_force_two_partition(x: np.ndarray) -> float:
    """Minimum WCSS over every split of the points into two non-empty sets."""
    n = len(x)
    best = np.inf
    for mask in range(1, 2 ** (n - 1)):
        assignment = np.array([(mask >> i) & 1 for i in range(n)])
        best = min(best, wcss(x, assignment, 2))
    return best
