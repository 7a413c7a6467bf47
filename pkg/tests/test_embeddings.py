import numpy as np
import pytest

from fairmtl.embeddings import (
    EmbeddingFormatError,
    EncodeStats,
    cosine_distance,
    cosine_distance_matrix,
    encode_sentence,
    load_embeddings,
    tokenize,
)

from helpers import tiny_table


def write(tmp_path, text, name="vecs.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoad:
    def test_header_file(self, tmp_path):
        table = load_embeddings(write(tmp_path, "2 3\ncat 1 0 0\ndog 0 1 0\n"))
        assert len(table) == 2
        assert table.dimension == 3
        np.testing.assert_array_equal(table.get("cat"), [1, 0, 0])

    def test_wrong_vector_length(self, tmp_path):
        with pytest.raises(EmbeddingFormatError, match="length"):
            load_embeddings(write(tmp_path, "1 3\ncat 1 0\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmbeddingFormatError, match="empty"):
            load_embeddings(write(tmp_path, ""))

    def test_headerless_autodetect(self, tmp_path):
        table = load_embeddings(write(tmp_path, "cat 1 0 0\ndog 0 1 0\n"))
        assert table.dimension == 3
        assert len(table) == 2

    def test_single_column_first_line_rejected(self, tmp_path):
        with pytest.raises(EmbeddingFormatError):
            load_embeddings(write(tmp_path, "cat\n"))

    def test_duplicate_token_last_wins(self, tmp_path, caplog):
        with caplog.at_level("WARNING"):
            table = load_embeddings(write(tmp_path, "2 2\ncat 1 0\ncat 0 1\n"))
        np.testing.assert_array_equal(table.get("cat"), [0, 1])
        assert "duplicate" in caplog.text

    def test_non_numeric_component(self, tmp_path):
        with pytest.raises(EmbeddingFormatError, match="non-numeric"):
            load_embeddings(write(tmp_path, "1 2\ncat 1 x\n"))

    def test_roundtrip_fixture(self, tmp_path):
        # write-then-read oracle: 50 tokens at d=10 survive a text round trip
        rng = np.random.default_rng(42)
        vectors = {f"tok{i}": rng.normal(size=10) for i in range(50)}
        lines = ["50 10"]
        for token, vec in vectors.items():
            lines.append(token + " " + " ".join(repr(float(v)) for v in vec))
        table = load_embeddings(write(tmp_path, "\n".join(lines) + "\n"))
        assert len(table) == 50
        for token, vec in vectors.items():
            np.testing.assert_array_equal(table.get(token), vec)


class TestEncode:
    def test_single_token(self):
        np.testing.assert_array_equal(encode_sentence(tiny_table(), ["cat"]), [1, 0, 0])

    def test_sum_of_two(self):
        np.testing.assert_array_equal(encode_sentence(tiny_table(), ["cat", "dog"]), [1, 1, 0])

    def test_oov_skipped_repeats_summed(self):
        stats = EncodeStats()
        out = encode_sentence(tiny_table(), ["cat", "unseen", "cat"], stats)
        np.testing.assert_array_equal(out, [2, 0, 0])
        assert stats.tokens == 3
        assert stats.oov == 1

    def test_empty_and_fully_oov_give_zero(self):
        stats = EncodeStats()
        np.testing.assert_array_equal(encode_sentence(tiny_table(), [], stats), [0, 0, 0])
        np.testing.assert_array_equal(encode_sentence(tiny_table(), ["nope"], stats), [0, 0, 0])
        assert stats.empty_sentences == 2

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        tokens = ["cat", "dog", "bird", "fish", "oov"] * 3
        base = encode_sentence(tiny_table(), tokens)
        for _ in range(20):
            shuffled = list(tokens)
            rng.shuffle(shuffled)
            np.testing.assert_allclose(encode_sentence(tiny_table(), shuffled), base)

    def test_concatenation_additivity(self):
        rng = np.random.default_rng(1)
        vocab = ["cat", "dog", "bird", "fish", "oov"]
        for _ in range(20):
            a = list(rng.choice(vocab, size=rng.integers(0, 6)))
            b = list(rng.choice(vocab, size=rng.integers(0, 6)))
            np.testing.assert_allclose(
                encode_sentence(tiny_table(), a + b),
                encode_sentence(tiny_table(), a) + encode_sentence(tiny_table(), b),
            )


class TestTokenize:
    def test_simple_strips_punctuation_and_lowercases(self):
        assert tokenize("I'm Afraid, truly!") == ["im", "afraid", "truly"]

    def test_whitespace_mode(self):
        assert tokenize("Keep, Case!", mode="whitespace") == ["Keep,", "Case!"]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            tokenize("x", mode="bogus")


class TestCosine:
    def test_identical(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0

    def test_orthogonal(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0

    def test_opposite(self):
        assert cosine_distance(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == 2.0

    def test_zero_norm_neutral(self):
        assert cosine_distance(np.zeros(2), np.array([1.0, 0.0])) == 1.0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            cosine_distance(np.zeros(2), np.zeros(3))

    def test_symmetry_self_and_scale_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            u = rng.normal(size=5)
            v = rng.normal(size=5)
            c = float(rng.uniform(0.1, 10))
            assert cosine_distance(u, v) == pytest.approx(cosine_distance(v, u))
            assert cosine_distance(u, u) == pytest.approx(0.0, abs=1e-12)
            assert cosine_distance(c * u, v) == pytest.approx(cosine_distance(u, v), abs=1e-12)

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(5, 6))
        a[2] = 0.0  # zero-norm row takes the neutral distance
        dist = cosine_distance_matrix(a, b)
        for i in range(4):
            for j in range(5):
                assert dist[i, j] == pytest.approx(cosine_distance(a[i], b[j]), abs=1e-12)
