"""Fairness, accuracy and their harmonic mean over an annotated test set.

Fairness for a (label, attribute) unit is the product of the predicted-label
posterior fractions over the attribute's values, scaled by p**p so that a
perfectly uniform posterior scores exactly 1.  A label that is never
predicted leaves the unit's fairness undefined (reported as such, never
coerced to 0).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .trainer import MultiTaskModel, predict


@dataclass(frozen=True)
class UnitResult:
    label: int
    label_name: str
    attribute: int
    attribute_name: str
    counts: tuple[int, ...]
    fairness: float | None
    gamma: float | None


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    units: tuple[UnitResult, ...]
    n_test: int


def accuracy(predictions: np.ndarray, references: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    references = np.asarray(references)
    if predictions.shape != references.shape:
        raise ValueError("predictions and references differ in length")
    if predictions.size == 0:
        raise ValueError("empty inputs")
    return float((predictions == references).mean())


def fairness_from_counts(counts: np.ndarray | list[int]) -> float | None:
    """p**p times the product of count fractions; None when nothing counted.

    Computed as the product of p*count/total factors so a perfectly uniform
    count vector scores exactly 1.0 regardless of cardinality.
    """
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return None
    p = counts.size
    return float(np.prod(p * counts / total))


def unit_counts(
    predictions: np.ndarray, test: Corpus, label: int, attribute: int
) -> np.ndarray:
    """Per-value counts of attribute ``attribute`` among instances predicted
    ``label``.  Every test instance must be annotated for the attribute."""
    attrs = test.attribute_matrix()[:, attribute]
    if (attrs < 0).any():
        bad = int(np.flatnonzero(attrs < 0)[0])
        raise ValueError(
            f"test instance {bad} lacks annotation for attribute "
            f"{test.schema.names[attribute]!r}"
        )
    p = test.schema.cardinalities[attribute]
    mask = np.asarray(predictions) == label
    return np.bincount(attrs[mask], minlength=p)


def fairness(
    predictions: np.ndarray, test: Corpus, label: int, attribute: int
) -> float | None:
    return fairness_from_counts(unit_counts(predictions, test, label, attribute))


def gamma(fairness_value: float, accuracy_value: float) -> float:
    """Harmonic mean 2FA/(F+A)."""
    if fairness_value < 0 or accuracy_value < 0:
        raise ValueError("inputs must be >= 0")
    if fairness_value == 0 and accuracy_value == 0:
        raise ValueError("gamma undefined for F = A = 0")
    return 2.0 * fairness_value * accuracy_value / (fairness_value + accuracy_value)


def evaluate(
    model: MultiTaskModel, test: Corpus, units: list[tuple[int, int]]
) -> EvalReport:
    """Predict the test corpus and assemble accuracy plus per-unit fairness."""
    if len(test) == 0:
        raise ValueError("empty test corpus")
    predictions = predict(model, test)
    acc = accuracy(predictions, test.labels())
    out = []
    for label, attribute in units:
        if not 0 <= label < test.label_count:
            raise ValueError(f"label id {label} out of range")
        if not 0 <= attribute < test.schema.attribute_count:
            raise ValueError(f"attribute index {attribute} out of range")
        counts = unit_counts(predictions, test, label, attribute)
        f = fairness_from_counts(counts)
        g = None
        if f is not None and (f > 0 or acc > 0):
            g = gamma(f, acc)
        out.append(
            UnitResult(
                label=label,
                label_name=test.label_names[label],
                attribute=attribute,
                attribute_name=test.schema.names[attribute],
                counts=tuple(int(v) for v in counts),
                fairness=f,
                gamma=g,
            )
        )
    return EvalReport(accuracy=acc, units=tuple(out), n_test=len(test))


def _fmt(value: float | None, digits: int = 6) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def report_csv(entries: list[tuple[str, EvalReport]]) -> str:
    """CSV with one row per (method, unit): method, accuracy, unit, F, gamma."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "accuracy", "unit", "F", "gamma"])
    for method, report in entries:
        for unit in report.units:
            writer.writerow(
                [
                    method,
                    _fmt(report.accuracy),
                    f"{unit.label_name}:{unit.attribute_name}",
                    _fmt(unit.fairness),
                    _fmt(unit.gamma),
                ]
            )
    return buf.getvalue()


def render_table(entries: list[tuple[str, EvalReport]], digits: int = 4) -> str:
    """Aligned text table: one row per method, Acc column, then F and gamma
    per unit (units are the union across entries, in first-seen order)."""
    unit_keys: list[str] = []
    for _, report in entries:
        for unit in report.units:
            key = f"{unit.label_name}:{unit.attribute_name}"
            if key not in unit_keys:
                unit_keys.append(key)
    headers = ["method", "acc"]
    for key in unit_keys:
        headers.extend([f"F({key})", f"g({key})"])
    rows = [headers]
    for method, report in entries:
        by_key = {f"{u.label_name}:{u.attribute_name}": u for u in report.units}
        row = [method, f"{report.accuracy:.{digits}f}"]
        for key in unit_keys:
            unit = by_key.get(key)
            if unit is None:
                row.extend(["-", "-"])
            else:
                row.append("undef" if unit.fairness is None else f"{unit.fairness:.{digits}f}")
                row.append("undef" if unit.gamma is None else f"{unit.gamma:.{digits}f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(len(headers))).rstrip())
    return "\n".join(lines) + "\n"
