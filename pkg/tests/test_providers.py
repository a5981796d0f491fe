import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholar.providers import (
    GenerationResult,
    ProviderConfig,
    cosine,
    cost_of,
    cross_score,
    embed_texts,
    generate,
)


@pytest.fixture
def embed_cfg():
    return ProviderConfig(role="embed", dim=256)


@pytest.fixture
def gen_cfg():
    return ProviderConfig(role="generate")


@pytest.fixture
def cross_cfg():
    return ProviderConfig(role="cross_score")


class TestLocalEmbedder:
    def test_identical_texts_identical_vectors(self, embed_cfg):
        a, b = embed_texts(["PHB melting point", "PHB melting point"], embed_cfg)
        assert np.array_equal(a.values, b.values)

    def test_unit_norm(self, embed_cfg):
        (v,) = embed_texts(["some polymer text"], embed_cfg)
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)
        assert np.linalg.norm(v.values) == pytest.approx(1.0, abs=1e-6)

    def test_empty_string_zero_vector(self, embed_cfg):
        (v,) = embed_texts([""], embed_cfg)
        assert v.is_zero
        assert cosine(v, v) == 0.0

    def test_related_text_scores_higher(self, embed_cfg):
        a, b, c = embed_texts(
            ["PHB melting", "PHB melting point", "reactor feedstock"], embed_cfg
        )
        assert cosine(a, b) > cosine(a, c)

    def test_batch_permutation(self, embed_cfg):
        texts = ["alpha beta", "gamma", "delta eps"]
        fwd = embed_texts(texts, embed_cfg)
        rev = embed_texts(texts[::-1], embed_cfg)
        for f, r in zip(fwd, rev[::-1]):
            assert np.array_equal(f.values, r.values)

    def test_empty_batch_rejected(self, embed_cfg):
        with pytest.raises(ValueError):
            embed_texts([], embed_cfg)

    def test_wrong_role_rejected(self, gen_cfg):
        with pytest.raises(ValueError):
            embed_texts(["x"], gen_cfg)

    @given(st.text(min_size=1, max_size=50))
    @settings(max_examples=50, deadline=None)
    def test_self_cosine_one_or_zero(self, text):
        cfg = ProviderConfig(role="embed", dim=64)
        (v,) = embed_texts([text], cfg)
        if v.is_zero:
            assert cosine(v, v) == 0.0
        else:
            assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)


class TestLocalGenerator:
    def test_answer_marker_echoed(self, gen_cfg):
        result = generate("context stuff\nANSWER: the melting point rises\n", gen_cfg)
        assert result.text == "the melting point rises"

    def test_empty_prompt_rejected(self, gen_cfg):
        with pytest.raises(ValueError):
            generate("", gen_cfg)
        with pytest.raises(ValueError):
            generate("   ", gen_cfg)

    def test_token_estimator_is_whitespace_count(self, gen_cfg):
        prompt = "ANSWER: ok\n" + "tok " * 98  # 100 whitespace tokens total
        result = generate(prompt, gen_cfg)
        assert result.prompt_tokens == 100

    def test_abstains_without_overlap(self, gen_cfg):
        prompt = (
            "EVIDENCE:\n[1] completely unrelated material (source: 10.1/x)\n"
            "QUESTION: what is zzybaloo?\n"
        )
        result = generate(prompt, gen_cfg)
        assert result.text.startswith("I do not know")

    def test_cites_overlapping_evidence(self, gen_cfg):
        prompt = (
            "EVIDENCE:\n"
            "[1] zzybaloo increases hardness (source: 10.1/x)\n"
            "[2] unrelated text (source: 10.1/y)\n"
            "QUESTION: what about zzybaloo?\n"
        )
        result = generate(prompt, gen_cfg)
        assert "[1]" in result.text
        assert "[2]" not in result.text


class TestCrossScorer:
    def test_identical_beats_disjoint(self, cross_cfg):
        scores = cross_score(
            "phb melting point", ["phb melting point", "reactor design"], cross_cfg
        )
        assert scores[0] >= scores[1]

    def test_empty_passages_rejected(self, cross_cfg):
        with pytest.raises(ValueError):
            cross_score("q", [], cross_cfg)

    def test_overlap_fractions(self, cross_cfg):
        # 3-token query; overlaps of 3, 1, 0 tokens
        scores = cross_score(
            "alpha beta gamma",
            ["alpha beta gamma", "alpha delta", "zeta eta"],
            cross_cfg,
        )
        assert scores == [pytest.approx(1.0), pytest.approx(1 / 3), pytest.approx(0.0)]
        assert scores[0] > scores[1] > scores[2]


class TestCost:
    def test_basic_arithmetic(self):
        cfg = ProviderConfig(
            role="generate", price_per_1k_prompt=0.15, price_per_1k_completion=0.60
        )
        r = GenerationResult("x", 1000, 1000, 0.0)
        assert cost_of(r, cfg) == pytest.approx(0.75)

    def test_zero_prices_zero_cost(self):
        cfg = ProviderConfig(role="generate")
        r = GenerationResult("x", 12345, 6789, 0.0)
        assert cost_of(r, cfg) == 0.0

    def test_prompt_only(self):
        cfg = ProviderConfig(
            role="generate", price_per_1k_prompt=0.2, price_per_1k_completion=0.8
        )
        assert cost_of(GenerationResult("x", 500, 0, 0.0), cfg) == pytest.approx(0.1)

    @given(
        st.integers(min_value=0, max_value=10**6),
        st.integers(min_value=0, max_value=10**6),
    )
    @settings(max_examples=50, deadline=None)
    def test_linear_in_tokens(self, p, c):
        cfg = ProviderConfig(
            role="generate", price_per_1k_prompt=0.3, price_per_1k_completion=0.7
        )
        single = cost_of(GenerationResult("x", p, c, 0.0), cfg)
        double = cost_of(GenerationResult("x", 2 * p, 2 * c, 0.0), cfg)
        assert double == pytest.approx(2 * single)


class TestConfigValidation:
    def test_bad_role(self):
        with pytest.raises(ValueError):
            ProviderConfig(role="magic")

    def test_negative_price(self):
        with pytest.raises(ValueError):
            ProviderConfig(role="embed", price_per_1k_prompt=-1)

    def test_zero_timeout(self):
        with pytest.raises(ValueError):
            ProviderConfig(role="embed", timeout_seconds=0)
