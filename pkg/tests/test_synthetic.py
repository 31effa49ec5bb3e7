import pytest

from src.schema import ALL_KEYS, PRESENT, AttributeKey
from src.seeding import rng_for
from src.synthetic import VALUES, distinct_vectors, make_synthetic, reference_caption, value_table

from tests.conftest import DEFAULT_VALUES


class TestMakeSynthetic:
    def test_shape_and_split(self):
        lines, texts = make_synthetic(50, 4, seed=0)
        assert len(lines) == 200
        assert len(texts) == 100
        by_split = {}
        for line in lines:
            by_split.setdefault(line.split, set()).add(line.identity_id)
        assert {k: len(v) for k, v in by_split.items()} == {"train": 35, "val": 5, "test": 10}
        assert not by_split["train"] & by_split["test"]
        assert not by_split["train"] & by_split["val"]

    def test_identities_have_distinct_attributes(self):
        lines, _ = make_synthetic(30, 2, seed=1)
        per_identity = {line.identity_id: tuple(line.attributes[k.value] for k in ALL_KEYS) for line in lines}
        assert len(set(per_identity.values())) == 30

    def test_deterministic(self):
        assert make_synthetic(10, 2, seed=4) == make_synthetic(10, 2, seed=4)
        assert make_synthetic(10, 2, seed=4)[0] != make_synthetic(10, 2, seed=5)[0]

    def test_style_texts_not_reference_captions(self):
        lines, texts = make_synthetic(10, 1, seed=0)
        captions = {line.caption for line in lines}
        assert not captions & {t.text for t in texts}

    def test_too_few_identities(self):
        with pytest.raises(ValueError):
            make_synthetic(2, 4, seed=0)

    def test_values_per_key_caps_appearance(self):
        lines, _ = make_synthetic(60, 2, seed=3, values_per_key=2)
        for key, values in VALUES.items():
            seen = {line.attributes[key.value] for line in lines}
            assert seen <= set(values[:2]), key
        per_identity = {line.identity_id: tuple(line.attributes[k.value] for k in ALL_KEYS) for line in lines}
        assert len(set(per_identity.values())) == 60

    def test_uncapped_corpus_unchanged(self):
        assert make_synthetic(10, 2, seed=4, values_per_key=0) == make_synthetic(10, 2, seed=4)

    def test_value_table(self):
        assert value_table() == VALUES
        assert value_table(1)[AttributeKey.clothes_color] == ("black",)
        with pytest.raises(ValueError):
            value_table(-1)

    def test_more_identities_than_vectors(self):
        with pytest.raises(ValueError):
            distinct_vectors(33, rng_for(0, "synthetic"), value_table(1))


class TestReferenceCaption:
    def test_items_and_bike(self):
        row = {**DEFAULT_VALUES}
        row[ALL_KEYS[9]] = PRESENT   # glasses
        row[ALL_KEYS[12]] = PRESENT  # bike
        assert reference_caption(row) == (
            "A man wearing a red t-shirt and blue jeans, with black short hair and black sneakers. "
            "He carries glasses. They ride a bike."
        )
