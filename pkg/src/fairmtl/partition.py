"""Partitioning label groups into attribute-combination clusters.

Three routes produce the same :class:`PartitionAssignment` shape: seeded
K-means over a group's sentence vectors (no annotations), nearest-neighbour
propagation of attribute values from an annotated seed set, and per-attribute
linear classifiers trained on the seed set.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .corpus import AttributeSchema, Corpus
from .embeddings import cosine_distance_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabelGroup:
    """Indices of all corpus instances sharing one primary label."""

    label: int
    member_indices: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.member_indices)


@dataclass(frozen=True)
class PartitionAssignment:
    """Cluster id per member of one label group.

    ``members`` are corpus instance indices and ``clusters`` the parallel
    cluster ids in ``{0..k-1}``.  ``label`` is None for raw clusterings not
    tied to a label group.
    """

    label: int | None
    k: int
    members: tuple[int, ...]
    clusters: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.members) != len(self.clusters):
            raise ValueError("members and clusters must be parallel")
        for c in self.clusters:
            if not 0 <= c < self.k:
                raise ValueError(f"cluster id {c} out of range for k={self.k}")

    @property
    def sizes(self) -> list[int]:
        out = [0] * self.k
        for c in self.clusters:
            out[c] += 1
        return out

    @property
    def assignment(self) -> dict[int, int]:
        return dict(zip(self.members, self.clusters))


def group_by_label(corpus: Corpus) -> list[LabelGroup]:
    """One group per label value occurring in the corpus, ascending."""
    buckets: dict[int, list[int]] = {}
    for i, inst in enumerate(corpus.instances):
        buckets.setdefault(inst.y, []).append(i)
    return [LabelGroup(label, tuple(buckets[label])) for label in sorted(buckets)]


@dataclass(frozen=True)
class KMeansResult:
    partition: PartitionAssignment
    centroids: np.ndarray
    n_iter: int
    inertia: float
    inertia_trace: tuple[float, ...]


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted seeding: next centre drawn with probability
    proportional to squared distance from the centres chosen so far."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total == 0.0:
            idx = int(rng.integers(n))  # all points coincide with a centre
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[j] = x[idx]
        closest = np.minimum(closest, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign_with_repair(
    x: np.ndarray, centroids: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid assignment (ties to the lowest cluster id), then move
    the point farthest from its own centroid into each empty cluster so all k
    clusters stay populated."""
    d2 = _squared_distances(x, centroids)
    labels = d2.argmin(axis=1)
    sizes = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(sizes == 0):
        own = d2[np.arange(x.shape[0]), labels]
        movable = sizes[labels] > 1
        if not movable.any():
            break
        candidates = np.where(movable, own, -np.inf)
        mover = int(candidates.argmax())
        sizes[labels[mover]] -= 1
        labels[mover] = empty
        sizes[empty] += 1
        d2[mover, empty] = 0.0
    return labels, sizes


def _lloyd(
    x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, int, list[float]]:
    centroids = _plusplus_init(x, k, rng)
    labels, _ = _assign_with_repair(x, centroids, k)
    trace = [float(((x - centroids[labels]) ** 2).sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_centroids = np.stack([x[labels == j].mean(axis=0) for j in range(k)])
        shift = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        centroids = new_centroids
        new_labels, _ = _assign_with_repair(x, centroids, k)
        trace.append(float(((x - centroids[new_labels]) ** 2).sum()))
        stable = bool(np.array_equal(new_labels, labels))
        labels = new_labels
        if stable or shift < tol:
            break
    return labels, centroids, n_iter, trace


def kmeans(
    vectors: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 10,
    members: tuple[int, ...] | None = None,
    label: int | None = None,
) -> KMeansResult:
    """Lloyd's algorithm with Euclidean distance and ++-style seeding.

    Runs ``n_init`` independent seeded initialisations and keeps the lowest
    within-cluster sum of squares.  The returned assignment never contains an
    empty cluster, and every point sits in the cluster of its nearest final
    centroid.  Deterministic given (vectors, k, seed).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("vectors must be a 2-d array")
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} vectors, got {n}")
    if max_iter < 1 or tol < 0 or n_init < 1:
        raise ValueError("invalid max_iter / tol / n_init")

    best: tuple[float, int] | None = None
    best_state = None
    seeds = np.random.SeedSequence(seed).spawn(n_init)
    for i, child in enumerate(seeds):
        rng = np.random.default_rng(child)
        labels, centroids, n_iter, trace = _lloyd(x, k, rng, max_iter, tol)
        inertia = trace[-1]
        if best is None or inertia < best[0]:
            best = (inertia, i)
            best_state = (labels, centroids, n_iter, trace)
    assert best_state is not None
    labels, centroids, n_iter, trace = best_state
    if members is None:
        members = tuple(range(n))
    elif len(members) != n:
        raise ValueError("members must be parallel to vectors")
    partition = PartitionAssignment(
        label=label, k=k, members=members, clusters=tuple(int(c) for c in labels)
    )
    return KMeansResult(partition, centroids, n_iter, trace[-1], tuple(trace))


def cluster_label_group(
    corpus: Corpus,
    group: LabelGroup,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 10,
) -> KMeansResult:
    """K-means over one label group's vectors, keyed by corpus indices."""
    x = np.stack([corpus.instances[i].x for i in group.member_indices])
    return kmeans(
        x, k, seed, max_iter=max_iter, tol=tol, n_init=n_init,
        members=group.member_indices, label=group.label,
    )


def _majority_by_rank(values: np.ndarray) -> int:
    """Majority value of a distance-ordered neighbour list; ties go to the
    value seen earliest (i.e. the nearest neighbour's side)."""
    counts: dict[int, int] = {}
    first_rank: dict[int, int] = {}
    for rank, v in enumerate(int(v) for v in values):
        counts[v] = counts.get(v, 0) + 1
        first_rank.setdefault(v, rank)
    best = max(counts.values())
    tied = [v for v, c in counts.items() if c == best]
    return min(tied, key=lambda v: first_rank[v])


def knn_propagate(
    seed_set: Corpus, rest: Corpus, k: int, scope: str = "global"
) -> np.ndarray:
    """Assign attribute values to unannotated instances by majority vote over
    the k nearest annotated seeds (cosine distance, per attribute).

    ``scope='per-label'`` restricts the neighbour pool to seeds sharing the
    instance's primary label, falling back to the full pool for labels with
    no seeds.  Deterministic; neighbour ties are broken by seed order.
    """
    if len(seed_set) == 0:
        raise ValueError("seed set is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    if scope not in ("global", "per-label"):
        raise ValueError(f"unknown scope {scope!r}")
    seed_attrs = seed_set.attribute_matrix()
    if (seed_attrs < 0).any():
        raise ValueError("all seed instances must be annotated")
    if k > len(seed_set):
        logger.warning("k=%d larger than seed set (%d); clamping", k, len(seed_set))
        k = len(seed_set)

    seed_x = seed_set.vectors()
    seed_y = seed_set.labels()
    rest_x = rest.vectors()
    dist = cosine_distance_matrix(rest_x, seed_x)

    m = seed_set.schema.attribute_count
    out = np.empty((len(rest), m), dtype=np.int64)
    for i, inst in enumerate(rest.instances):
        pool = np.arange(len(seed_set))
        if scope == "per-label":
            same = np.flatnonzero(seed_y == inst.y)
            if same.size > 0:
                pool = same
            else:
                logger.warning("no seeds with label %d; using the global pool", inst.y)
        row = dist[i, pool]
        order = pool[np.argsort(row, kind="stable")][: min(k, pool.size)]
        for a in range(m):
            out[i, a] = _majority_by_rank(seed_attrs[order, a])
    return out


@dataclass(frozen=True)
class AttributeClassifier:
    """One multinomial linear model per attribute: (weights p_i x d, intercept p_i)."""

    models: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def attribute_count(self) -> int:
        return len(self.models)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_attribute_classifier(
    seed_set: Corpus,
    epochs: int = 200,
    learning_rate: float = 0.1,
    seed: int = 0,
    batch_size: int = 16,
) -> AttributeClassifier:
    """Train per-attribute softmax regressions on the annotated seed set by
    mini-batch gradient descent on cross-entropy.  Deterministic given seed.

    Raises if some attribute shows only one value in the seed set, since the
    resulting model could never separate anything.
    """
    if len(seed_set) == 0:
        raise ValueError("seed set is empty")
    attrs = seed_set.attribute_matrix()
    if (attrs < 0).any():
        raise ValueError("all seed instances must be annotated")
    if epochs < 1 or learning_rate <= 0 or batch_size < 1:
        raise ValueError("invalid training hyperparameters")

    x = seed_set.vectors()
    n, d = x.shape
    models = []
    for a, p in enumerate(seed_set.schema.cardinalities):
        targets = attrs[:, a]
        if np.unique(targets).size < 2:
            raise ValueError(
                f"degenerate training set: attribute {seed_set.schema.names[a]!r} "
                "has a single observed value"
            )
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, a)))
        w = rng.uniform(-1.0, 1.0, size=(p, d)) / np.sqrt(d)
        b = np.zeros(p)
        onehot = np.eye(p)[targets]
        for _ in range(epochs):
            perm = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = perm[start : start + batch_size]
                probs = _softmax_rows(x[idx] @ w.T + b)
                delta = (probs - onehot[idx]) / idx.size
                w -= learning_rate * delta.T @ x[idx]
                b -= learning_rate * delta.sum(axis=0)
        models.append((w, b))
    return AttributeClassifier(tuple(models))


def infer_attributes(clf: AttributeClassifier, corpus: Corpus) -> np.ndarray:
    """Argmax class per attribute per instance; ties go to the lowest id."""
    x = corpus.vectors()
    m = clf.attribute_count
    out = np.empty((len(corpus), m), dtype=np.int64)
    for a, (w, b) in enumerate(clf.models):
        if w.shape[1] != x.shape[1]:
            raise ValueError(f"dimension mismatch: model {w.shape[1]}, corpus {x.shape[1]}")
        out[:, a] = (x @ w.T + b).argmax(axis=1)
    return out


def attributes_to_partition(
    group: LabelGroup, attrs: np.ndarray, schema: AttributeSchema
) -> PartitionAssignment:
    """Cluster id = row-major index of each member's attribute combination."""
    clusters = []
    for i in group.member_indices:
        row = attrs[i]
        if (row < 0).any():
            raise ValueError(f"instance {i} has no attribute assignment")
        clusters.append(schema.combo_index(tuple(int(v) for v in row)))
    return PartitionAssignment(
        label=group.label,
        k=schema.combination_count,
        members=group.member_indices,
        clusters=tuple(clusters),
    )


def best_relabeling_agreement(predicted: np.ndarray, truth: np.ndarray, k: int) -> float:
    """Max agreement fraction over all k! cluster relabelings (brute force)."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValueError("shape mismatch")
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapping = np.array(perm)
        best = max(best, float((mapping[predicted] == truth).mean()))
    return best
