import numpy as np
import pytest

from peplatent.errors import InvalidArgumentError
from peplatent.models.explore import ExploreConfig
from peplatent.services.codec import ToyCodec
from peplatent.services.explore import (
    explore_many,
    explore_one,
    explore_tsv,
    longest_run,
    passes_filters,
    perturb,
    sigma_levels,
)


class FailingCodec:
    """Never decodes; counts the calls"""

    d_emb = 4

    def __init__(self):
        self.calls = 0

    def encode(self, seq):
        raise NotImplementedError

    def decode(self, x):
        self.calls += 1
        return None


class FixedCodec:
    """Returns a scripted sequence per call"""

    d_emb = 4

    def __init__(self, outputs):
        self.outputs = list(outputs)

    def encode(self, seq):
        raise NotImplementedError

    def decode(self, x):
        return self.outputs.pop(0)


def test_sigma_levels_are_inclusive():
    cfg = ExploreConfig(sigma_init=0.3, sigma_step=0.1, sigma_max=0.5)
    assert sigma_levels(cfg) == pytest.approx([0.3, 0.4, 0.5])
    assert len(sigma_levels(ExploreConfig())) == 18


def test_exhaustion_counts_every_attempt():
    cfg = ExploreConfig(sigma_init=0.3, sigma_step=0.1, sigma_max=0.5, attempts_per_sigma=50)
    codec = FailingCodec()
    result = explore_one(np.zeros((4, 4)), codec, cfg)
    assert result.exhausted
    assert result.attempts == 150
    assert result.levels == 3
    assert codec.calls == 150


def test_filtered_sequences_count_as_failures():
    cfg = ExploreConfig(sigma_init=0.3, sigma_step=0.1, sigma_max=0.4, attempts_per_sigma=2)
    codec = FixedCodec(["AAAAAAAA", None, "AAAAAAAA", "ACDEFGHI"])
    result = explore_one(np.zeros((9, 4)), codec, cfg)
    assert result.sequence == "ACDEFGHI"
    assert result.attempts == 4
    assert result.sigma_used == pytest.approx(0.4)
    assert result.levels == 2


def test_accepts_first_passing_candidate():
    codec = FixedCodec(["LRISSDVHQDAASVH"])
    result = explore_one(np.zeros((16, 4)), codec, ExploreConfig())
    assert result.sequence == "LRISSDVHQDAASVH"
    assert result.attempts == 1
    assert result.sigma_used == pytest.approx(0.3)


def test_non_finite_source_rejected():
    x = np.zeros((3, 4))
    x[1, 1] = np.nan
    with pytest.raises(InvalidArgumentError):
        explore_one(x, FailingCodec(), ExploreConfig())


def test_perturb_scales_noise(rng):
    x = np.zeros((2000, 4))
    out = perturb(x, 0.5, rng)
    assert out.std() == pytest.approx(0.5, rel=0.05)
    assert np.array_equal(perturb(x, 0.0, rng), x)
    with pytest.raises(InvalidArgumentError):
        perturb(x, -0.1, rng)


@pytest.mark.parametrize(
    "seq, passed, reason",
    [
        ("LRISSDVHQDAASVH", True, None),
        # exactly half the positions are A
        ("ACADAEAFAG", True, None),
        ("AAAAAACDEF", False, "residue-dominance"),
        # a run of 3 in 10 is exactly 30%
        ("AAACDEFGHA", True, None),
        ("AAAACDEFGH", False, "homopolymer-run"),
        ("ACACACACAC", True, None),
    ],
)
def test_filters(seq, passed, reason):
    verdict = passes_filters(seq)
    assert verdict.passed is passed
    assert verdict.reason == reason


def test_longest_run():
    assert longest_run("ABBBCC") == 3
    assert longest_run("A") == 1
    assert longest_run("") == 0


def test_real_codec_finds_a_sequence():
    # a narrow codebook keeps noisy rows close enough to some residue
    codec = ToyCodec(8, seed=0)
    x = codec.encode("LRISSDVHQDAASVH")
    result = explore_one(x, codec, ExploreConfig(seed=1))
    assert not result.exhausted
    assert len(result.sequence) == 15
    assert passes_filters(result.sequence).passed


def test_explore_many_is_thread_independent():
    codec = ToyCodec(8, seed=0)
    sources = {f"s{i}": codec.encode(seq) for i, seq in enumerate(["LRISSDVHQDAASVH", "MKTAYIAKQR", "GSHMWQEDLK"])}
    cfg = ExploreConfig(seed=5)
    single = explore_many(sources, codec, cfg, threads=1)
    multi = explore_many(sources, codec, cfg, threads=3)
    assert single == multi
    assert [r.source_id for r in single] == ["s0", "s1", "s2"]


def test_explore_tsv_format():
    codec = FixedCodec(["LRISSDVHQDAASVH"])
    ok = explore_one(np.zeros((16, 4)), codec, ExploreConfig(), source_id="a")
    cfg = ExploreConfig(sigma_init=0.3, sigma_step=0.1, sigma_max=0.3, attempts_per_sigma=2)
    failed = explore_one(np.zeros((4, 4)), FailingCodec(), cfg, source_id="b")
    lines = explore_tsv([ok, failed]).splitlines()
    assert lines == [
        "source_id\tsequence\tsigma_used\tattempts",
        "a\tLRISSDVHQDAASVH\t0.30\t1",
        "b\t-\t-\t2",
    ]


def test_sigma_max_below_sigma_init_rejected():
    with pytest.raises(ValueError, match="sigma_max"):
        ExploreConfig(sigma_init=0.5, sigma_max=0.4)
    assert len(sigma_levels(ExploreConfig(sigma_init=0.5, sigma_max=0.5))) == 1
