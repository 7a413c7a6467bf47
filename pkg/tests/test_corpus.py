import numpy as np
import pytest

from fairmtl.corpus import (
    AttributeSchema,
    CorpusFormatError,
    SyntheticSpec,
    load_corpus,
    make_synthetic,
    planted_cells,
    render_corpus_csv,
    render_embeddings_txt,
    sample_seed_set,
    split,
    write_corpus_csv,
    write_embeddings_txt,
)

from helpers import manual_corpus, planted, schema_2x2, tiny_table


class TestSchema:
    def test_cardinality_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            AttributeSchema.from_pairs([("gender", ["only"])])

    def test_combo_index_row_major(self):
        schema = schema_2x2()
        assert schema.combination_count == 4
        assert schema.combo_index((0, 0)) == 0
        assert schema.combo_index((0, 1)) == 1
        assert schema.combo_index((1, 0)) == 2
        assert schema.combo_index((1, 1)) == 3

    def test_combo_bijection(self):
        schema = AttributeSchema.from_pairs(
            [("a", ["x", "y"]), ("b", ["1", "2", "3"]), ("c", ["p", "q"])]
        )
        seen = set()
        for i in range(schema.combination_count):
            combo = schema.combo_of(i)
            assert schema.combo_index(combo) == i
            seen.add(combo)
        assert len(seen) == schema.combination_count == 12

    def test_value_index_unknown(self):
        with pytest.raises(ValueError, match="unknown value"):
            schema_2x2().value_index(0, "unknown")


class TestLoadCorpus:
    def write(self, tmp_path, text):
        path = tmp_path / "corpus.csv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_four_row_fixture(self, tmp_path):
        schema = AttributeSchema.from_pairs([("gender", ["male", "female"])])
        path = self.write(
            tmp_path,
            "sentence,label,gender\n"
            "cat,fear,male\n"
            "dog,joy,female\n"
            "cat dog,fear,female\n"
            "dog cat,joy,male\n",
        )
        corpus = load_corpus(path, tiny_table(), schema)
        assert corpus.label_count == 2
        assert corpus.label_names == ("fear", "joy")
        assert corpus.schema.attribute_count == 1
        assert len(corpus) == 4
        np.testing.assert_array_equal(corpus.instances[2].x, [1, 1, 0])
        assert corpus.instances[2].z == (1,)

    def test_unknown_attribute_value_names_row_and_column(self, tmp_path):
        schema = AttributeSchema.from_pairs([("gender", ["male", "female"])])
        path = self.write(tmp_path, "sentence,label,gender\ncat,fear,unknown\n")
        with pytest.raises(CorpusFormatError, match=r"row 2.*'gender'"):
            load_corpus(path, tiny_table(), schema)

    def test_eec_shaped_file(self, tmp_path):
        schema = schema_2x2()
        emotions = ["joy", "fear", "sadness", "anger"]
        rows = ["sentence,label,gender,race"]
        for i, emotion in enumerate(emotions):
            for g in ("male", "female"):
                for r in ("caucasian", "african_american"):
                    rows.append(f"cat dog,{emotion},{g},{r}")
        corpus = load_corpus(self.write(tmp_path, "\n".join(rows) + "\n"), tiny_table(), schema)
        assert corpus.label_count == 4
        assert corpus.schema.combination_count == 4
        assert len(corpus) == 16

    def test_missing_column(self, tmp_path):
        path = self.write(tmp_path, "sentence,label\ncat,fear\n")
        with pytest.raises(CorpusFormatError, match="missing required column"):
            load_corpus(path, tiny_table(), schema_2x2())

    def test_empty_corpus(self, tmp_path):
        path = self.write(tmp_path, "sentence,label,gender,race\n")
        with pytest.raises(CorpusFormatError, match="empty"):
            load_corpus(path, tiny_table(), schema_2x2())

    def test_unknown_label_with_explicit_names(self, tmp_path):
        schema = AttributeSchema.from_pairs([("gender", ["male", "female"])])
        path = self.write(tmp_path, "sentence,label,gender\ncat,surprise,male\n")
        with pytest.raises(CorpusFormatError, match="unknown label"):
            load_corpus(path, tiny_table(), schema, label_names=["fear", "joy"])

    def test_partially_annotated_row_rejected(self, tmp_path):
        path = self.write(tmp_path, "sentence,label,gender,race\ncat,fear,male,\n")
        with pytest.raises(CorpusFormatError, match="partially annotated"):
            load_corpus(path, tiny_table(), schema_2x2())

    def test_unannotated_row_allowed(self, tmp_path):
        path = self.write(tmp_path, "sentence,label,gender,race\ncat,fear,,\n")
        corpus = load_corpus(path, tiny_table(), schema_2x2())
        assert corpus.instances[0].z is None


class TestSplit:
    def corpus100(self):
        rng = np.random.default_rng(5)
        labels = [i % 4 for i in range(100)]
        attrs = [(int(rng.integers(2)), int(rng.integers(2))) for _ in range(100)]
        return manual_corpus(rng.normal(size=(100, 6)), labels, attrs)

    def test_stratified_80_20(self):
        train, test = split(self.corpus100(), 0.8, seed=7)
        assert len(train) == 80 and len(test) == 20
        for label in range(4):
            assert int((train.labels() == label).sum()) == 20
            assert int((test.labels() == label).sum()) == 5

    def test_deterministic(self):
        c = self.corpus100()
        a = split(c, 0.8, seed=7)
        b = split(c, 0.8, seed=7)
        assert [i.tokens for i in a[0].instances] == [i.tokens for i in b[0].instances]
        assert [i.tokens for i in a[1].instances] == [i.tokens for i in b[1].instances]

    def test_disjoint_and_exhaustive(self):
        c = self.corpus100()
        train, test = split(c, 0.7, seed=3)
        train_tokens = {i.tokens for i in train.instances}
        test_tokens = {i.tokens for i in test.instances}
        assert not train_tokens & test_tokens
        assert len(train_tokens | test_tokens) == 100

    def test_empty_side_error(self):
        c = manual_corpus(
            np.zeros((4, 3)), [0, 0, 1, 1], [(0, 0)] * 4, label_names=("a", "b")
        )
        with pytest.raises(ValueError, match="empty side"):
            split(c, 0.99, seed=1)

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            split(self.corpus100(), 1.0, seed=0)


class TestSeedSet:
    def train100(self):
        rng = np.random.default_rng(9)
        labels = [i % 4 for i in range(100)]
        attrs = [(i % 2, (i // 2) % 2) for i in range(100)]
        return manual_corpus(rng.normal(size=(100, 5)), labels, attrs)

    def test_size_is_ceil(self):
        result = sample_seed_set(self.train100(), alpha=0.2, seed=1)
        assert len(result.seed_set) == 20
        assert len(result.rest) == 80

    def test_alpha_one_empties_rest(self):
        result = sample_seed_set(self.train100(), alpha=1.0, seed=1)
        assert len(result.rest) == 0
        assert len(result.seed_set) == 100

    def test_deterministic(self):
        a = sample_seed_set(self.train100(), alpha=0.3, seed=4)
        b = sample_seed_set(self.train100(), alpha=0.3, seed=4)
        assert a.seed_indices == b.seed_indices

    def test_annotations_hidden_from_rest(self):
        result = sample_seed_set(self.train100(), alpha=0.2, seed=2)
        assert all(inst.z is not None for inst in result.seed_set.instances)
        assert all(inst.z is None for inst in result.rest.instances)

    def test_disjoint_exhaustive_indices(self):
        result = sample_seed_set(self.train100(), alpha=0.37, seed=6)
        merged = sorted(result.seed_indices + result.rest_indices)
        assert merged == list(range(100))

    def test_stratified_over_cells_when_counts_allow(self):
        # 16 (label, combo) cells: joint stratification spreads 32 seeds 2-per-cell
        corpus = planted(per_cell=25, bias=0.0, seed=3)
        result = sample_seed_set(corpus, alpha=0.08, seed=5)
        cells = {}
        for inst in result.seed_set.instances:
            key = (inst.y, inst.z)
            cells[key] = cells.get(key, 0) + 1
        assert len(cells) == 16
        assert set(cells.values()) == {2}

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            sample_seed_set(self.train100(), alpha=0.0, seed=1)
        with pytest.raises(ValueError):
            sample_seed_set(self.train100(), alpha=1.2, seed=1)

    def test_unannotated_train_rejected(self):
        c = manual_corpus(np.zeros((4, 3)), [0, 0, 1, 1], [(0, 0), None, (1, 1), (0, 1)],
                          label_names=("a", "b"))
        with pytest.raises(ValueError, match="lacks attribute annotations"):
            sample_seed_set(c, alpha=0.5, seed=0)


class TestSynthetic:
    def test_unbiased_cells_exactly_uniform(self):
        corpus = planted(per_cell=25, bias=0.0, seed=1)
        for label in range(4):
            counts = np.zeros(4, dtype=int)
            for inst in corpus.instances:
                if inst.y == label:
                    counts[corpus.schema.combo_index(inst.z)] += 1
            np.testing.assert_array_equal(counts, [25, 25, 25, 25])

    def test_full_bias_collapses_designated_label(self):
        corpus = planted(per_cell=25, bias=1.0, seed=1)
        combos = {
            corpus.schema.combo_index(inst.z)
            for inst in corpus.instances
            if inst.y == 0
        }
        assert len(combos) == 1
        # other labels stay uniform
        for label in (1, 2, 3):
            combos = {
                corpus.schema.combo_index(inst.z)
                for inst in corpus.instances
                if inst.y == label
            }
            assert len(combos) == 4

    def test_deterministic(self):
        a = planted(per_cell=5, bias=0.4, seed=9)
        b = planted(per_cell=5, bias=0.4, seed=9)
        assert len(a) == len(b)
        np.testing.assert_array_equal(a.vectors(), b.vectors())

    def test_cell_centres_respect_separation(self):
        corpus = planted(per_cell=25, bias=0.0, separation=10.0, dimension=10, seed=2)
        cells = planted_cells(corpus)
        labels = corpus.labels()
        x = corpus.vectors()
        means = []
        for label in range(4):
            for combo in range(4):
                mask = (labels == label) & (cells == combo)
                means.append(x[mask].mean(axis=0))
        means = np.stack(means)
        diffs = np.linalg.norm(means[:, None] - means[None, :], axis=2)
        diffs[np.diag_indices(len(means))] = np.inf
        # empirical means sit within ~sigma/sqrt(n) of the planted centres
        assert diffs.min() > 10.0 - 2.0

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(label_count=1, schema=schema_2x2(), per_cell=5)
        with pytest.raises(ValueError):
            SyntheticSpec(label_count=2, schema=schema_2x2(), per_cell=5, bias=1.5)

    def test_csv_and_embedding_roundtrip(self, tmp_path):
        from fairmtl.embeddings import load_embeddings

        corpus = planted(per_cell=4, bias=0.6, seed=13)
        corpus_path = tmp_path / "synth.csv"
        emb_path = tmp_path / "synth_embeddings.txt"
        write_corpus_csv(corpus, corpus_path)
        write_embeddings_txt(corpus, emb_path)
        table = load_embeddings(emb_path)
        loaded = load_corpus(corpus_path, table, corpus.schema,
                             label_names=list(corpus.label_names))
        assert len(loaded) == len(corpus)
        np.testing.assert_array_equal(loaded.vectors(), corpus.vectors())
        assert [i.y for i in loaded.instances] == [i.y for i in corpus.instances]
        assert [i.z for i in loaded.instances] == [i.z for i in corpus.instances]

    def test_render_matches_write(self, tmp_path):
        corpus = planted(per_cell=2, seed=4)
        write_corpus_csv(corpus, tmp_path / "c.csv")
        write_embeddings_txt(corpus, tmp_path / "e.txt")
        assert (tmp_path / "c.csv").read_text() == render_corpus_csv(corpus)
        assert (tmp_path / "e.txt").read_text() == render_embeddings_txt(corpus)
