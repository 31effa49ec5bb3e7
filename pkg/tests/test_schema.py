import pytest
from pydantic import ValidationError

from src.errors import ConfidenceOutOfRange, DuplicateKey, MissingKey, UnparseableAnswer
from src.schema import (
    ALL_KEYS,
    FIXED_KEYS,
    VARIABLE_KEYS,
    AttributeAnswer,
    AttributeKey,
    AttributeSet,
    TextRecord,
    validate_attribute_set,
)


class TestAttributeKeys:
    def test_fourteen_keys_partitioned(self):
        assert len(ALL_KEYS) == 14
        assert set(FIXED_KEYS) | set(VARIABLE_KEYS) == set(ALL_KEYS)
        assert not set(FIXED_KEYS) & set(VARIABLE_KEYS)


class TestValidateAttributeSet:
    def test_well_formed_set_returned(self, attribute_set_factory):
        s = attribute_set_factory()
        assert validate_attribute_set(s) is s

    def test_missing_key(self, attribute_set_factory):
        s = attribute_set_factory()
        short = AttributeSet(image_id=s.image_id, answers=s.answers[:-1])
        with pytest.raises(MissingKey) as exc:
            validate_attribute_set(short)
        assert exc.value.key == "bag"

    def test_zero_confidence(self, attribute_set_factory):
        conf = [1.0] * 14
        conf[ALL_KEYS.index(AttributeKey.gender)] = 0.0
        with pytest.raises(ConfidenceOutOfRange):
            validate_attribute_set(attribute_set_factory(confidences=conf))

    def test_duplicate_key(self, attribute_set_factory):
        s = attribute_set_factory()
        dup = AttributeSet(image_id=s.image_id, answers=s.answers + (s.answers[0],))
        with pytest.raises(DuplicateKey):
            validate_attribute_set(dup)

    def test_variable_key_needs_presence_token(self, attribute_set_factory):
        with pytest.raises(UnparseableAnswer):
            validate_attribute_set(attribute_set_factory(bag="yes"))

    def test_answer_lookup(self, attribute_set_factory):
        s = attribute_set_factory(gender="woman")
        assert s.value(AttributeKey.gender) == "woman"
        assert s.values()["clothes_style"] == "t-shirt"
        with pytest.raises(MissingKey):
            AttributeSet(image_id="x", answers=()).answer(AttributeKey.bag)


class TestRecords:
    def test_text_record_rejects_empty_text(self):
        with pytest.raises(ValidationError):
            TextRecord(text_id="t0", text="")

    def test_answers_are_immutable(self):
        a = AttributeAnswer(key=AttributeKey.bag, raw_answer="yes", value="present", confidence=0.9)
        with pytest.raises(ValidationError):
            a.confidence = 0.1
