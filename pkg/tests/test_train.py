import math

import numpy as np
import pytest

from app.gtr_service import generate_captions, ingest_corpus
from src.config import apply_overrides
from src.errors import EmptyTrainSet
from src.model import LOG_TAU_RANGE, ReferenceRetrievalModel
from src.train import artifact_paths, save_training, train_model


@pytest.fixture
def corpus(small_config):
    return ingest_corpus(small_config)


@pytest.fixture
def captions(corpus, small_config):
    return generate_captions(corpus, small_config)[0]


class TestTrainModel:
    def test_steps_and_epochs(self, captions, corpus, small_config):
        result = train_model(captions, corpus, small_config)
        # 18 train images in batches of 8: 8, 8, 2
        assert len(result.steps) == 9
        assert list(result.epochs["epoch"]) == [1, 2, 3]
        assert np.isfinite(result.steps[["loss", "itc"]].to_numpy()).all()
        # a two-caption batch of one identity has no ITM negative
        assert np.isfinite(result.steps["itm"].dropna()).all()
        low, high = (math.exp(x) for x in LOG_TAU_RANGE)
        assert result.steps["temperature"].between(low, high).all()

    def test_max_steps(self, captions, corpus, small_config):
        result = train_model(captions, corpus, apply_overrides(small_config, max_steps=4))
        assert len(result.steps) == 4

    def test_deterministic(self, captions, corpus, small_config):
        a = train_model(captions, corpus, small_config)
        b = train_model(captions, corpus, small_config)
        for name in a.model.params:
            np.testing.assert_array_equal(a.model.params[name], b.model.params[name])

    def test_beta_zero_matches_certain_captions(self, corpus, small_config):
        certain = generate_captions(corpus, small_config)[0]
        unsure = generate_captions(corpus, apply_overrides(small_config, confidence_correct_lo=0.5))[0]
        assert [c.text for c in certain] == [c.text for c in unsure]
        assert any(c.confidence < 1.0 for c in unsure)
        a = train_model(certain, corpus, apply_overrides(small_config, beta=0.8))
        b = train_model(unsure, corpus, apply_overrides(small_config, beta=0.0))
        np.testing.assert_allclose(a.steps["loss"], b.steps["loss"], atol=1e-6)

    def test_all_losses(self, captions, corpus, small_config):
        config = apply_overrides(small_config, loss_set=("itc", "itm", "sdm", "irr", "id"))
        result = train_model(captions, corpus, config)
        for name in ("itc", "itm", "sdm", "irr", "id"):
            values = result.steps[name].dropna()
            assert len(values) and np.isfinite(values).all()

    @pytest.mark.parametrize("seed", range(5))
    def test_contrastive_loss_descends(self, small_config, seed):
        config = apply_overrides(small_config, seed=seed, loss_set=("itc",), epochs=10)
        corpus = ingest_corpus(config)
        result = train_model(generate_captions(corpus, config)[0], corpus, config)
        assert result.epochs["itc"].iloc[-1] < result.epochs["itc"].iloc[0]

    def test_no_train_captions(self, corpus, small_config):
        test_only = generate_captions(corpus, small_config, images=corpus.split("test"))[0]
        with pytest.raises(EmptyTrainSet):
            train_model(test_only, corpus, small_config)


class TestSaveTraining:
    def test_artifacts(self, captions, corpus, small_config):
        result = train_model(captions, corpus, small_config)
        paths = save_training(result, small_config.model_path, small_config)
        assert paths == artifact_paths(small_config.model_path)
        for path in paths.values():
            assert path.exists()
        loaded = ReferenceRetrievalModel.load(paths["model"])
        texts = ["The man with black short hair wears red t-shirt."]
        np.testing.assert_array_equal(loaded.embed_texts(texts), result.model.embed_texts(texts))
