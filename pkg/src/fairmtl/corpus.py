"""Attribute-annotated classification corpora.

Covers CSV ingestion (EEC-shaped files), deterministic label-stratified
splitting, seed-set sampling for the few-shot setting, and a synthetic
generator that plants one Gaussian cell per (label, attribute-combination)
pair so tests have a known-correct partition and known bias structure.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, EncodeStats, encode_sentence, tokenize


class CorpusFormatError(ValueError):
    """Malformed corpus file or a row inconsistent with the schema."""


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered secondary attributes, each with >= 2 categorical values.

    The product of the cardinalities gives the cluster count used when a
    label group is partitioned by attribute-value combination.  Combinations
    are indexed row-major over the declared value order.
    """

    attributes: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        if not self.attributes:
            raise ValueError("schema needs at least one attribute")
        for name, values in self.attributes:
            if len(values) < 2:
                raise ValueError(f"attribute {name!r} has {len(values)} values, need >= 2")
            if len(set(values)) != len(values):
                raise ValueError(f"attribute {name!r} has duplicate values")

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, list[str]]]) -> "AttributeSchema":
        return cls(tuple((name, tuple(values)) for name, values in pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(len(values) for _, values in self.attributes)

    @property
    def attribute_count(self) -> int:
        return len(self.attributes)

    @property
    def combination_count(self) -> int:
        k = 1
        for p in self.cardinalities:
            k *= p
        return k

    def combo_index(self, values: tuple[int, ...]) -> int:
        """Row-major index of an attribute-value combination."""
        if len(values) != self.attribute_count:
            raise ValueError(f"expected {self.attribute_count} values, got {len(values)}")
        idx = 0
        for v, p in zip(values, self.cardinalities):
            if not 0 <= v < p:
                raise ValueError(f"value id {v} out of range for cardinality {p}")
            idx = idx * p + v
        return idx

    def combo_of(self, index: int) -> tuple[int, ...]:
        """Inverse of :meth:`combo_index`."""
        if not 0 <= index < self.combination_count:
            raise ValueError(f"combination index {index} out of range")
        out = []
        for p in reversed(self.cardinalities):
            out.append(index % p)
            index //= p
        return tuple(reversed(out))

    def value_index(self, attribute: int, value_name: str) -> int:
        values = self.attributes[attribute][1]
        try:
            return values.index(value_name)
        except ValueError:
            raise ValueError(
                f"unknown value {value_name!r} for attribute {self.attributes[attribute][0]!r}"
            ) from None


@dataclass(frozen=True)
class Instance:
    """One classified datum: raw tokens, embedded vector, label, attributes."""

    tokens: tuple[str, ...]
    x: np.ndarray
    y: int
    z: tuple[int, ...] | None = None


@dataclass(frozen=True)
class Corpus:
    label_names: tuple[str, ...]
    schema: AttributeSchema
    instances: tuple[Instance, ...]

    def __post_init__(self) -> None:
        c = len(self.label_names)
        for i, inst in enumerate(self.instances):
            if not 0 <= inst.y < c:
                raise ValueError(f"instance {i}: label id {inst.y} out of range for c={c}")
            if inst.z is not None:
                for a, (v, p) in enumerate(zip(inst.z, self.schema.cardinalities)):
                    if not 0 <= v < p:
                        raise ValueError(f"instance {i}: attribute {a} value {v} out of range")

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def label_count(self) -> int:
        return len(self.label_names)

    @property
    def dimension(self) -> int:
        if not self.instances:
            raise ValueError("empty corpus has no dimension")
        return self.instances[0].x.shape[0]

    def vectors(self) -> np.ndarray:
        return np.stack([inst.x for inst in self.instances])

    def labels(self) -> np.ndarray:
        return np.array([inst.y for inst in self.instances], dtype=np.int64)

    def attribute_matrix(self) -> np.ndarray:
        """(n, M) int matrix of attribute value ids, -1 where unannotated."""
        m = self.schema.attribute_count
        out = np.full((len(self.instances), m), -1, dtype=np.int64)
        for i, inst in enumerate(self.instances):
            if inst.z is not None:
                out[i] = inst.z
        return out

    def with_instances(self, instances: list[Instance]) -> "Corpus":
        return Corpus(self.label_names, self.schema, tuple(instances))


def load_corpus(
    path: str | Path,
    table: EmbeddingTable,
    schema: AttributeSchema,
    label_names: list[str] | None = None,
    tokenizer: str = "simple",
    stats: EncodeStats | None = None,
) -> Corpus:
    """Load a corpus CSV: columns ``sentence``, ``label``, one per attribute.

    Attribute columns may be empty (row unannotated); a row annotated for
    some attributes but not all is rejected.  When ``label_names`` is not
    given, labels are the sorted distinct values found in the file.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CorpusFormatError(f"{path}: missing header row")
        for col in ("sentence", "label", *schema.names):
            if col not in reader.fieldnames:
                raise CorpusFormatError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    if not rows:
        raise CorpusFormatError(f"{path}: empty corpus")

    if label_names is None:
        label_names = sorted({row["label"] for row in rows})
    label_ids = {name: i for i, name in enumerate(label_names)}

    instances: list[Instance] = []
    for line_no, row in enumerate(rows, start=2):  # header is line 1
        label = row["label"]
        if label not in label_ids:
            raise CorpusFormatError(f"{path}: row {line_no}: unknown label {label!r}")
        raw_values = [(name, (row.get(name) or "").strip()) for name in schema.names]
        filled = [v for _, v in raw_values if v]
        if filled and len(filled) != len(raw_values):
            missing = next(name for name, v in raw_values if not v)
            raise CorpusFormatError(
                f"{path}: row {line_no}: partially annotated (column {missing!r} empty)"
            )
        z: tuple[int, ...] | None = None
        if filled:
            ids = []
            for a, (name, value) in enumerate(raw_values):
                try:
                    ids.append(schema.value_index(a, value))
                except ValueError:
                    raise CorpusFormatError(
                        f"{path}: row {line_no}: unknown value {value!r} in column {name!r}"
                    ) from None
            z = tuple(ids)
        tokens = tuple(tokenize(row["sentence"], tokenizer))
        x = encode_sentence(table, list(tokens), stats)
        x.flags.writeable = False
        instances.append(Instance(tokens=tokens, x=x, y=label_ids[label], z=z))
    return Corpus(tuple(label_names), schema, tuple(instances))


def render_corpus_csv(corpus: Corpus) -> str:
    """CSV text in the shape :func:`load_corpus` expects."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sentence", "label", *corpus.schema.names])
    for inst in corpus.instances:
        row = [" ".join(inst.tokens), corpus.label_names[inst.y]]
        if inst.z is None:
            row.extend("" for _ in corpus.schema.names)
        else:
            for a, v in enumerate(inst.z):
                row.append(corpus.schema.attributes[a][1][v])
        writer.writerow(row)
    return buf.getvalue()


def write_corpus_csv(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(render_corpus_csv(corpus), encoding="utf-8")


def split(corpus: Corpus, train_fraction: float, seed: int) -> tuple[Corpus, Corpus]:
    """Deterministic label-stratified split; remainders go to the train side."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    labels = corpus.labels()
    # exact fraction arithmetic so boundaries like 25 * (1 - 0.8) floor cleanly
    test_fraction = 1 - Fraction(str(train_fraction))
    for label in range(corpus.label_count):
        idx = np.flatnonzero(labels == label)
        if idx.size == 0:
            continue
        idx = idx.copy()
        rng.shuffle(idx)
        n_test = math.floor(test_fraction * idx.size)
        n_train = idx.size - n_test
        if n_test == 0 or n_train == 0:
            raise ValueError(
                f"train_fraction {train_fraction} leaves an empty side for label "
                f"{corpus.label_names[label]!r} ({idx.size} instances)"
            )
        test_idx.extend(int(i) for i in idx[:n_test])
        train_idx.extend(int(i) for i in idx[n_test:])
    train_idx.sort()
    test_idx.sort()
    train = corpus.with_instances([corpus.instances[i] for i in train_idx])
    test = corpus.with_instances([corpus.instances[i] for i in test_idx])
    return train, test


@dataclass(frozen=True)
class SeedSplit:
    """Result of seed-set sampling.

    ``seed_indices`` / ``rest_indices`` point back into the corpus that was
    sampled, aligned with the instance order of ``seed_set`` / ``rest``.
    Attribute annotations are erased from ``rest``.
    """

    seed_set: Corpus
    rest: Corpus
    seed_indices: tuple[int, ...]
    rest_indices: tuple[int, ...]


def sample_seed_set(train: Corpus, alpha: float, seed: int) -> SeedSplit:
    """Reveal annotations for a ceil(alpha * n) subset, stratified by
    (label, attribute combination) as far as the cell counts allow."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    n = len(train)
    if n == 0:
        raise ValueError("cannot sample a seed set from an empty corpus")
    for i, inst in enumerate(train.instances):
        if inst.z is None:
            raise ValueError(f"instance {i} lacks attribute annotations")

    cells: dict[tuple[int, int], list[int]] = {}
    for i, inst in enumerate(train.instances):
        key = (inst.y, train.schema.combo_index(inst.z))  # type: ignore[arg-type]
        cells.setdefault(key, []).append(i)

    alpha_exact = Fraction(str(alpha))
    target = math.ceil(alpha_exact * n)
    keys = sorted(cells)
    quotas = {}
    fractional = []
    assigned = 0
    for key in keys:
        raw = alpha_exact * len(cells[key])
        base = min(math.floor(raw), len(cells[key]))
        quotas[key] = base
        assigned += base
        fractional.append((-(raw - base), key))
    fractional.sort()
    remaining = target - assigned
    cursor = 0
    while remaining > 0:
        _, key = fractional[cursor % len(fractional)]
        if quotas[key] < len(cells[key]):
            quotas[key] += 1
            remaining -= 1
        cursor += 1
        if cursor > 2 * len(fractional) and remaining > 0:
            # every cell in this pass was full; fall back to any spare capacity
            for key in keys:
                spare = len(cells[key]) - quotas[key]
                take = min(spare, remaining)
                quotas[key] += take
                remaining -= take
                if remaining == 0:
                    break
            break

    rng = np.random.default_rng(seed)
    seed_idx: list[int] = []
    for key in keys:
        members = np.array(cells[key])
        rng.shuffle(members)
        seed_idx.extend(int(i) for i in members[: quotas[key]])
    seed_idx.sort()
    seed_set_mask = np.zeros(n, dtype=bool)
    seed_set_mask[seed_idx] = True
    rest_idx = [i for i in range(n) if not seed_set_mask[i]]

    seed_set = train.with_instances([train.instances[i] for i in seed_idx])
    rest = train.with_instances(
        [replace(train.instances[i], z=None) for i in rest_idx]
    )
    return SeedSplit(seed_set, rest, tuple(seed_idx), tuple(rest_idx))


@dataclass(frozen=True)
class SyntheticSpec:
    """Plan for a planted-cluster corpus.

    Each (label, attribute-combination) cell is an isotropic Gaussian around
    its own centre; centres are placed with pairwise distance >= separation.
    ``bias`` skews the attribute distribution of the labels listed in
    ``biased_labels`` toward ``designated_combo``: uniform at 0, a point mass
    at 1.  Unlisted labels stay uniform, 25/25/... per combination.
    """

    label_count: int
    schema: AttributeSchema
    per_cell: int
    separation: float = 10.0
    bias: float = 0.0
    dimension: int = 10
    sigma: float = 1.0
    biased_labels: tuple[int, ...] = (0,)
    designated_combo: int | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.label_count < 2:
            raise ValueError("label_count must be >= 2")
        if self.per_cell < 1:
            raise ValueError("per_cell must be >= 1")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if not 0.0 <= self.bias <= 1.0:
            raise ValueError("bias must be in [0, 1]")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        k = self.schema.combination_count
        for label in self.biased_labels:
            if not 0 <= label < self.label_count:
                raise ValueError(f"biased label {label} out of range")
        if self.designated_combo is not None and not 0 <= self.designated_combo < k:
            raise ValueError(f"designated_combo {self.designated_combo} out of range")
        if self.label_names is not None and len(self.label_names) != self.label_count:
            raise ValueError("label_names length must equal label_count")


def _cell_counts(spec: SyntheticSpec, label: int) -> list[int]:
    """Integer combination counts for one label, largest-remainder rounded."""
    k = spec.schema.combination_count
    total = spec.per_cell * k
    if label not in spec.biased_labels or spec.bias == 0.0:
        return [spec.per_cell] * k
    designated = spec.designated_combo if spec.designated_combo is not None else k - 1
    shares = [(1.0 - spec.bias) / k] * k
    shares[designated] += spec.bias
    raw = [total * s for s in shares]
    counts = [math.floor(r) for r in raw]
    remainders = sorted(range(k), key=lambda j: (-(raw[j] - counts[j]), j))
    for j in remainders[: total - sum(counts)]:
        counts[j] += 1
    return counts


def make_synthetic(spec: SyntheticSpec, seed: int) -> Corpus:
    """Generate a planted-cluster corpus; deterministic given the seed.

    Every instance carries a unique single pseudo-token, so the corpus can
    round-trip through a paired embedding file (token vector == instance
    vector) and back through the regular loaders.
    """
    rng = np.random.default_rng(seed)
    k = spec.schema.combination_count
    n_cells = spec.label_count * k
    centers = rng.normal(size=(n_cells, spec.dimension))
    if spec.separation > 0:
        diffs = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diffs**2).sum(axis=2))
        dist[np.diag_indices(n_cells)] = np.inf
        min_dist = float(dist.min())
        if min_dist == 0.0:
            raise ValueError("degenerate centre draw; use a different seed")
        centers *= spec.separation / min_dist

    label_names = spec.label_names or tuple(f"label_{a}" for a in range(spec.label_count))
    instances: list[Instance] = []
    token_id = 0
    for label in range(spec.label_count):
        counts = _cell_counts(spec, label)
        for combo in range(k):
            center = centers[label * k + combo]
            z = spec.schema.combo_of(combo)
            for _ in range(counts[combo]):
                x = center + spec.sigma * rng.normal(size=spec.dimension)
                x.flags.writeable = False
                instances.append(
                    Instance(tokens=(f"w{token_id:06d}",), x=x, y=label, z=z)
                )
                token_id += 1
    return Corpus(label_names, spec.schema, tuple(instances))


def planted_cells(corpus: Corpus) -> np.ndarray:
    """Ground-truth combination index per instance of an annotated corpus."""
    out = np.empty(len(corpus), dtype=np.int64)
    for i, inst in enumerate(corpus.instances):
        if inst.z is None:
            raise ValueError(f"instance {i} lacks annotations")
        out[i] = corpus.schema.combo_index(inst.z)
    return out


def render_embeddings_txt(corpus: Corpus) -> str:
    """One embedding row per token, assuming single-token sentences.

    Values are written with ``repr`` so reloading reproduces the float64
    vectors bit for bit.
    """
    rows = []
    for i, inst in enumerate(corpus.instances):
        if len(inst.tokens) != 1:
            raise ValueError(f"instance {i} has {len(inst.tokens)} tokens, expected 1")
        rows.append((inst.tokens[0], inst.x))
    lines = [f"{len(rows)} {corpus.dimension}"]
    for token, vec in rows:
        lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
    return "\n".join(lines) + "\n"


def write_embeddings_txt(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(render_embeddings_txt(corpus), encoding="utf-8")
