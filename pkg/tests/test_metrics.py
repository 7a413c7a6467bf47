import numpy as np
import pytest

from fairmtl.metrics import (
    EvalReport,
    UnitResult,
    accuracy,
    evaluate,
    fairness,
    fairness_from_counts,
    gamma,
    render_table,
    report_csv,
)
from fairmtl.trainer import MultiTaskModel

from helpers import manual_corpus, schema_2x2


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy(np.array([0, 1, 2]), np.array([0, 1, 2])) == 1.0

    def test_total_mismatch(self):
        assert accuracy(np.array([0, 1]), np.array([1, 0])) == 0.0

    def test_three_of_four(self):
        assert accuracy(np.array([0, 1, 2, 3]), np.array([0, 1, 2, 0])) == 0.75

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            accuracy(np.array([]), np.array([]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy(np.array([0]), np.array([0, 1]))


class TestFairness:
    def test_uniform_scores_exactly_one(self):
        assert fairness_from_counts([5, 5]) == 1.0
        assert fairness_from_counts([7, 7, 7]) == 1.0
        assert fairness_from_counts([3, 3, 3, 3, 3]) == 1.0

    def test_arithmetic(self):
        assert fairness_from_counts([3, 1]) == pytest.approx(0.75)

    def test_degenerate_skew_is_zero(self):
        assert fairness_from_counts([4, 0]) == 0.0

    def test_undefined_when_empty(self):
        assert fairness_from_counts([0, 0]) is None

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            counts = rng.integers(0, 20, size=int(rng.integers(2, 6)))
            if counts.sum() == 0:
                continue
            f = fairness_from_counts(counts)
            g = fairness_from_counts(rng.permutation(counts))
            assert f == pytest.approx(g)

    def test_bounded_and_maximal_only_at_uniform(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            counts = rng.integers(0, 30, size=int(rng.integers(2, 5)))
            if counts.sum() == 0:
                continue
            f = fairness_from_counts(counts)
            assert 0.0 <= f <= 1.0 + 1e-12
            if len(set(counts.tolist())) > 1:
                assert f < 1.0

    def test_predicted_label_posteriors(self):
        # two instances predicted label 0 with attribute values 0 and 1
        corpus = manual_corpus(
            np.zeros((4, 2)), [0, 0, 1, 1],
            [(0, 0), (1, 0), (0, 1), (1, 1)],
            schema_2x2(), ("a", "b"),
        )
        predictions = np.array([0, 0, 1, 1])
        assert fairness(predictions, corpus, 0, 0) == 1.0
        assert fairness(predictions, corpus, 0, 1) == 0.0  # race constant in predicted-0

    def test_never_predicted_is_undefined(self):
        corpus = manual_corpus(np.zeros((2, 2)), [0, 1], [(0, 0), (1, 1)],
                               schema_2x2(), ("a", "b"))
        assert fairness(np.array([1, 1]), corpus, 0, 0) is None

    def test_unannotated_test_instance_rejected(self):
        corpus = manual_corpus(np.zeros((2, 2)), [0, 1], [(0, 0), None],
                               schema_2x2(), ("a", "b"))
        with pytest.raises(ValueError, match="lacks annotation"):
            fairness(np.array([0, 1]), corpus, 0, 0)


class TestGamma:
    def test_reported_values(self):
        assert gamma(0.6818, 0.8238) == pytest.approx(0.7461, abs=1e-3)
        assert gamma(0.9532, 0.8870) == pytest.approx(0.9189, abs=1e-3)
        assert gamma(0.9993, 0.8782) == pytest.approx(0.9348, abs=1e-3)

    def test_equal_inputs(self):
        assert gamma(0.7, 0.7) == pytest.approx(0.7)

    def test_between_min_and_max_and_symmetric(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            f, a = rng.uniform(0.01, 1.0, size=2)
            g = gamma(f, a)
            assert min(f, a) - 1e-12 <= g <= max(f, a) + 1e-12
            assert g == pytest.approx(gamma(a, f))

    def test_both_zero_rejected(self):
        with pytest.raises(ValueError):
            gamma(0.0, 0.0)


class TestEvaluate:
    def balanced_corpus(self):
        labels = []
        attrs = []
        for y in range(2):
            for g in range(2):
                for r in range(2):
                    labels.append(y)
                    attrs.append((g, r))
        vectors = np.array([[1.0, 0.0] if y == 0 else [0.0, 1.0] for y in labels])
        return manual_corpus(vectors, labels, attrs, schema_2x2(), ("a", "b"))

    def test_perfect_predictor_on_balanced_corpus(self):
        corpus = self.balanced_corpus()
        model = MultiTaskModel(np.array([[5.0, 0.0], [0.0, 5.0]]), np.zeros(2))
        report = evaluate(model, corpus, [(0, 0), (0, 1), (1, 0)])
        assert report.accuracy == 1.0
        for unit in report.units:
            assert unit.fairness == 1.0
            assert unit.gamma == 1.0

    def test_constant_predictor(self):
        corpus = self.balanced_corpus()
        model = MultiTaskModel(np.zeros((2, 2)), np.array([5.0, 0.0]))
        report = evaluate(model, corpus, [(0, 0), (1, 0)])
        assert report.accuracy == 0.5
        # label 0 is always predicted, so its posterior is the whole-set balance
        assert report.units[0].fairness == 1.0
        assert report.units[0].counts == (4, 4)
        # label 1 is never predicted
        assert report.units[1].fairness is None
        assert report.units[1].gamma is None

    def test_counts_sum_to_predictions_per_label(self):
        corpus = self.balanced_corpus()
        model = MultiTaskModel(np.array([[5.0, 0.0], [0.0, 5.0]]), np.zeros(2))
        report = evaluate(model, corpus, [(0, 0), (1, 1)])
        for unit in report.units:
            assert sum(unit.counts) == 4

    def test_bad_unit_rejected(self):
        corpus = self.balanced_corpus()
        model = MultiTaskModel(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ValueError):
            evaluate(model, corpus, [(7, 0)])
        with pytest.raises(ValueError):
            evaluate(model, corpus, [(0, 9)])


def sample_report():
    units = (
        UnitResult(0, "fear", 0, "gender", (3, 1), 0.75, 0.76),
        UnitResult(0, "fear", 1, "race", (2, 2), None, None),
    )
    return EvalReport(accuracy=0.8123456, units=units, n_test=4)


class TestRendering:
    def test_report_csv_columns(self):
        text = report_csv([("BACP", sample_report())])
        lines = text.strip().split("\n")
        assert lines[0] == "method,accuracy,unit,F,gamma"
        assert lines[1] == "BACP,0.812346,fear:gender,0.750000,0.760000"
        assert lines[2] == "BACP,0.812346,fear:race,,"

    def test_table_alignment_and_undef(self):
        table = render_table([("BACP", sample_report()), ("BAC", sample_report())])
        lines = table.strip().split("\n")
        assert lines[0].startswith("method")
        assert "F(fear:gender)" in lines[0]
        assert "undef" in lines[2]
        assert len(lines) == 4
