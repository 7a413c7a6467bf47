"""Bias indicators and per-instance bias pseudo-labels.

Two sources: annotated posteriors (the fraction of a label group carrying an
attribute value, thresholded at epsilon) and cluster-membership disparity
(each cluster's relative deviation from the uniform size floor(n/k),
thresholded at epsilon).  Both produce a :class:`BiasLabeling`, the binary
auxiliary-task targets consumed by the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AttributeSchema, Corpus
from .partition import LabelGroup, PartitionAssignment, group_by_label


@dataclass(frozen=True)
class BiasUnit:
    """A (primary label, attribute, value) combination whose posterior skew
    is measured."""

    label: int
    attribute: int
    value: int


@dataclass(frozen=True)
class BiasLabeling:
    """Per-instance binary bias pseudo-labels plus the flagged sources.

    ``flagged_units`` holds ``('cluster', label, cluster_id)`` entries for
    partition-derived labelings and ``('unit', label, attribute, value)``
    entries for annotation-derived ones.
    """

    epsilon: float
    labels: dict[int, int]
    flagged_units: frozenset[tuple]

    def positives(self) -> int:
        return sum(self.labels.values())

    def as_array(self, n: int) -> np.ndarray:
        """Dense 0/1 vector over corpus indices 0..n-1; every index must be labeled."""
        missing = [i for i in range(n) if i not in self.labels]
        if missing:
            raise ValueError(f"bias labels missing for {len(missing)} instances, e.g. {missing[:5]}")
        out = np.zeros(n, dtype=np.int64)
        for i, v in self.labels.items():
            out[i] = v
        return out


def merge_labelings(labelings: list[BiasLabeling]) -> BiasLabeling:
    """Union of disjoint per-group labelings (same epsilon)."""
    if not labelings:
        raise ValueError("nothing to merge")
    eps = labelings[0].epsilon
    labels: dict[int, int] = {}
    flagged: set[tuple] = set()
    for lab in labelings:
        if lab.epsilon != eps:
            raise ValueError("cannot merge labelings with different epsilon")
        overlap = labels.keys() & lab.labels.keys()
        if overlap:
            raise ValueError(f"labelings overlap on {len(overlap)} instances")
        labels.update(lab.labels)
        flagged.update(lab.flagged_units)
    return BiasLabeling(eps, labels, frozenset(flagged))


def posterior_fraction(group: LabelGroup, corpus: Corpus, unit: BiasUnit) -> float:
    """Among the group's members, the fraction carrying ``unit.value`` for
    ``unit.attribute`` (exact count ratio)."""
    if len(group) == 0:
        raise ValueError("empty label group")
    hits = 0
    for i in group.member_indices:
        z = corpus.instances[i].z
        if z is None:
            raise ValueError(f"instance {i} lacks attribute annotations")
        if z[unit.attribute] == unit.value:
            hits += 1
    return hits / len(group)


def bias_indicator_annotated(
    group: LabelGroup, corpus: Corpus, unit: BiasUnit, epsilon: float
) -> int:
    """1 iff the posterior fraction reaches epsilon."""
    return int(posterior_fraction(group, corpus, unit) >= epsilon)


def cluster_disparity(partition: PartitionAssignment) -> np.ndarray:
    """Relative shift of each cluster's size from the uniform cardinality.

    Uses the floored uniform count ``n // k`` as both reference and
    denominator, so groups smaller than k are rejected (denominator 0).
    """
    n = len(partition.members)
    uniform = n // partition.k
    if uniform < 1:
        raise ValueError(
            f"group of {n} cannot be compared against k={partition.k} uniform clusters"
        )
    sizes = np.array(partition.sizes, dtype=np.float64)
    return np.abs(sizes - uniform) / uniform


def bias_labels_from_partition(
    partition: PartitionAssignment, epsilon: float
) -> BiasLabeling:
    """Label an instance 1 iff its cluster's disparity reaches epsilon."""
    disparity = cluster_disparity(partition)
    flagged_clusters = {j for j in range(partition.k) if disparity[j] >= epsilon}
    labels = {
        i: int(c in flagged_clusters)
        for i, c in zip(partition.members, partition.clusters)
    }
    flagged = frozenset(("cluster", partition.label, j) for j in flagged_clusters)
    return BiasLabeling(epsilon, labels, flagged)


def bias_labels_from_annotations(
    corpus: Corpus, schema: AttributeSchema, epsilon: float
) -> BiasLabeling:
    """Label an instance 1 iff any (label, attribute=value) unit it belongs
    to has a posterior fraction >= epsilon within its label group."""
    labels: dict[int, int] = {}
    flagged: set[tuple] = set()
    for group in group_by_label(corpus):
        flagged_values: list[set[int]] = []
        for a, p in enumerate(schema.cardinalities):
            hits = {b: 0 for b in range(p)}
            for i in group.member_indices:
                z = corpus.instances[i].z
                if z is None:
                    raise ValueError(f"instance {i} lacks attribute annotations")
                hits[z[a]] += 1
            values = {b for b in range(p) if hits[b] / len(group) >= epsilon}
            flagged_values.append(values)
            flagged.update(("unit", group.label, a, b) for b in values)
        for i in group.member_indices:
            z = corpus.instances[i].z
            assert z is not None
            labels[i] = int(any(z[a] in flagged_values[a] for a in range(schema.attribute_count)))
    return BiasLabeling(epsilon, labels, frozenset(flagged))


def dynamic_beta(
    partitions: list[PartitionAssignment], beta0: float, global_max: bool = False
) -> dict[int, float]:
    """Per-label regularisation weight beta0 * max cluster disparity.

    With ``global_max`` every label gets beta0 times the maximum disparity
    observed across all groups.
    """
    if beta0 < 0:
        raise ValueError("beta0 must be >= 0")
    per_label = {}
    for part in partitions:
        if part.label is None:
            raise ValueError("partition not tied to a label group")
        per_label[part.label] = beta0 * float(cluster_disparity(part).max())
    if global_max and per_label:
        top = max(per_label.values())
        per_label = {label: top for label in per_label}
    return per_label
