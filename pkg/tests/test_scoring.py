from __future__ import annotations

import math

import pytest

from autoseq import (
    DataError,
    LabelMapping,
    LabelSequence,
    TabularModel,
    class_scores,
    predict,
)
from autoseq.tabular import KeywordSignature

from conftest import one_field


def mapping_from(vocab, task, texts: dict[str, str]) -> LabelMapping:
    return LabelMapping.from_dict(
        {y: LabelSequence(vocab.encode(t), t) for y, t in texts.items()}
    )


@pytest.fixture
def biased_model(vocab4):
    """P(a)=0.7 after 'up', P(a)=0.2 after 'down'; b gets the complement's share."""
    a = vocab4.encode("a")[0]
    sig = KeywordSignature({"hi": ["up"], "lo": ["down"]})
    return TabularModel(
        vocab4, {"hi": {(): {a: 0.7}}, "lo": {(): {a: 0.2}}}, sig
    )


class TestLabelMapping:
    def test_validate_requires_full_coverage(self, vocab4, binary_task):
        mapping = mapping_from(vocab4, binary_task, {"neg": "a"})
        with pytest.raises(DataError, match="labels"):
            mapping.validate(binary_task)

    def test_validate_rejects_duplicate_sequences(self, vocab4, binary_task):
        mapping = mapping_from(vocab4, binary_task, {"neg": "a", "pos": "a"})
        with pytest.raises(DataError, match="distinct"):
            mapping.validate(binary_task)

    def test_empty_sequence_rejected(self):
        with pytest.raises(DataError):
            LabelSequence((), "")

    def test_text_round_trip(self, vocab4, binary_task):
        mapping = mapping_from(vocab4, binary_task, {"neg": "a b", "pos": "c"})
        assert mapping.as_text_dict() == {"neg": "a b", "pos": "c"}
        assert mapping.sequence_for("pos").ids == vocab4.encode("c")


class TestClassScores:
    def test_hand_values(self, vocab4, binary_task, biased_model, single_template):
        mapping = mapping_from(vocab4, binary_task, {"neg": "b", "pos": "a"})
        scores = class_scores(
            biased_model, single_template, one_field("up"), mapping, binary_task
        )
        assert scores["pos"] == pytest.approx(math.log(0.7), abs=1e-12)
        assert scores["neg"] == pytest.approx(math.log(0.1), abs=1e-12)

    def test_multi_token_sequence_uses_chain_rule(
        self, vocab4, binary_task, biased_model, single_template
    ):
        mapping = mapping_from(vocab4, binary_task, {"neg": "b", "pos": "a a"})
        scores = class_scores(
            biased_model, single_template, one_field("up"), mapping, binary_task
        )
        # second step falls back to the uniform table for the unseen context
        assert scores["pos"] == pytest.approx(math.log(0.7) + math.log(0.25), abs=1e-12)


class TestPredict:
    def test_follows_conditioning_input(
        self, vocab4, binary_task, biased_model, single_template
    ):
        mapping = mapping_from(vocab4, binary_task, {"neg": "b", "pos": "a"})
        assert predict(biased_model, single_template, one_field("up"),
                       mapping, binary_task) == "pos"
        assert predict(biased_model, single_template, one_field("down"),
                       mapping, binary_task) == "neg"

    def test_exact_tie_prefers_first_task_label(
        self, vocab4, binary_task, uniform4, single_template
    ):
        mapping = mapping_from(vocab4, binary_task, {"neg": "b", "pos": "a"})
        # uniform model scores both sequences identically
        assert predict(uniform4, single_template, one_field("whatever"),
                       mapping, binary_task) == "neg"

    def test_invalid_mapping_rejected_before_scoring(
        self, vocab4, binary_task, uniform4, single_template
    ):
        mapping = mapping_from(vocab4, binary_task, {"neg": "a", "pos": "a"})
        with pytest.raises(DataError):
            predict(uniform4, single_template, one_field("x"), mapping, binary_task)
