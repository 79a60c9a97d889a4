from itertools import product

import numpy as np
import pytest

from peplatent.errors import AlphabetError, EmbeddingFormatError, InvalidArgumentError, ShapeError
from peplatent.services.codec import AMINO_ACIDS, ToyCodec, build_codebook
from peplatent.services.embedding_store import (
    decode_embeddings,
    encode_embeddings,
    load_embeddings,
    require_width,
    write_embeddings,
)


@pytest.fixture(scope="module")
def codec():
    return ToyCodec(32, seed=0)


def test_codebook_is_orthonormal_when_wide_enough():
    vectors = build_codebook(32, seed=1).vectors.astype(np.float64)
    assert np.allclose(vectors @ vectors.T, np.eye(21), atol=1e-6)


def test_codebook_rows_are_unit_when_narrow():
    vectors = build_codebook(8, seed=1).vectors.astype(np.float64)
    assert vectors.shape == (21, 8)
    assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-6)


def test_codebook_is_seeded():
    assert np.array_equal(build_codebook(16, 3).vectors, build_codebook(16, 3).vectors)
    assert not np.array_equal(build_codebook(16, 3).vectors, build_codebook(16, 4).vectors)


def test_encode_adds_terminal_row(codec):
    x = codec.encode("ACD")
    assert x.shape == (4, 32)
    assert np.allclose(x[-1], codec.codebook.vectors[-1])


@pytest.mark.parametrize("length", [1, 2, 3])
def test_round_trip_all_short_sequences(codec, length):
    for letters in product(AMINO_ACIDS, repeat=length):
        seq = "".join(letters)
        assert codec.decode(codec.encode(seq)) == seq


def test_round_trip_random_15mers(codec, rng):
    for _ in range(1000):
        seq = "".join(rng.choice(list(AMINO_ACIDS), size=15))
        assert codec.decode(codec.encode(seq)) == seq


def test_narrow_codebook_still_round_trips(rng):
    codec = ToyCodec(8, seed=2)
    for _ in range(200):
        seq = "".join(rng.choice(list(AMINO_ACIDS), size=10))
        assert codec.decode(codec.encode(seq)) == seq


def test_decode_fails_below_tau(codec):
    x = codec.encode("ACDE")
    # mixing two orthogonal residues evenly gives cosine 1/sqrt(2) on both
    x[1] = codec.codebook.vectors[0] + codec.codebook.vectors[1]
    assert codec.decode(x) is not None
    x[2] = 0.0
    assert codec.decode(x) is None


def test_decode_ignores_terminal_row(codec):
    x = codec.encode("WY")
    x[-1] = 123.0
    assert codec.decode(x) == "WY"


def test_decode_shape_errors(codec):
    with pytest.raises(ShapeError):
        codec.decode(np.zeros((1, 32)))
    with pytest.raises(ShapeError):
        codec.decode(np.zeros((3, 31)))


@pytest.mark.parametrize("seq", ["ACXD", "acd", "AC D"])
def test_encode_rejects_unknown_letters(codec, seq):
    with pytest.raises(AlphabetError):
        codec.encode(seq)


def test_encode_rejects_empty(codec):
    with pytest.raises(InvalidArgumentError):
        codec.encode("")


def test_alphabet_error_names_position(codec):
    with pytest.raises(AlphabetError) as info:
        codec.encode("ACBD")
    assert info.value.position == 2
    assert info.value.letter == "B"


@pytest.fixture
def embeddings(rng):
    return {
        "r1/receptor": rng.standard_normal((5, 4)).astype(np.float32),
        "r1/binder": rng.standard_normal((3, 4)).astype(np.float32),
        "ünicode": np.zeros((1, 4), dtype=np.float32),
    }


def test_container_round_trip(embeddings, tmp_path):
    path = write_embeddings(embeddings, tmp_path / "e.pepe")
    loaded = load_embeddings(path)
    assert list(loaded) == list(embeddings)
    for key, value in embeddings.items():
        assert loaded[key].tobytes() == value.tobytes()


def test_container_rejects_bad_magic(embeddings):
    blob = bytearray(encode_embeddings(embeddings))
    blob[0:4] = b"XXXX"
    with pytest.raises(EmbeddingFormatError, match="magic"):
        decode_embeddings(bytes(blob))


@pytest.mark.parametrize("cut", [5, 30, -2])
def test_container_rejects_truncation(embeddings, cut):
    blob = encode_embeddings(embeddings)
    with pytest.raises(EmbeddingFormatError):
        decode_embeddings(blob[:cut])


def test_container_rejects_trailing_bytes(embeddings):
    with pytest.raises(EmbeddingFormatError, match="trailing"):
        decode_embeddings(encode_embeddings(embeddings) + b"\x00")


def test_container_rejects_non_matrix():
    with pytest.raises(ShapeError):
        encode_embeddings({"v": np.zeros(3)})


def test_require_width(embeddings):
    require_width(embeddings, 4)
    with pytest.raises(ShapeError, match="r1/receptor"):
        require_width(embeddings, 5)
