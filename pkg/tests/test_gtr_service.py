import json

import numpy as np
import pandas as pd
import pytest

from app import gtr_service
from src.a2t import render_template
from src.config import apply_overrides
from src.errors import ConfigError, UnknownBackend
from src.records import Corpus, read_captions
from src.schema import AttributeKey


@pytest.fixture
def corpus(small_config):
    return gtr_service.ingest_corpus(small_config)


class TestCheckBackends:
    def test_unknown_vqa_backend(self, small_config):
        with pytest.raises(UnknownBackend):
            gtr_service.check_backends(apply_overrides(small_config, vqa_backend="blip2"))

    def test_a2t_backend_only_checked_in_lm_mode(self, small_config):
        gtr_service.check_backends(apply_overrides(small_config, a2t_backend="t5"))
        with pytest.raises(UnknownBackend):
            gtr_service.check_backends(apply_overrides(small_config, a2t_backend="t5", a2t_mode="lm"))


class TestIngest:
    def test_synthetic_manifest_built_on_first_use(self, small_config):
        assert not small_config.manifest_path.exists()
        corpus = gtr_service.ingest_corpus(small_config)
        assert small_config.manifest_path.exists()
        assert small_config.style_corpus_path.exists()
        assert len(corpus.images) == 24

    def test_make_synthetic_needs_identities(self, small_config):
        with pytest.raises(ConfigError):
            gtr_service.make_synthetic_corpus(apply_overrides(small_config, synthetic_identities=0))


class TestGeneration:
    def test_noiseless_captions(self, corpus, small_config):
        captions, pairs = gtr_service.generate_captions(corpus, small_config)
        assert pairs == []
        train = corpus.split("train")
        assert [c.image_id for c in captions] == [img.image_id for img in train]
        for c in captions:
            row = corpus.truth_table[c.image_id]
            truth = gtr_service.truth_attribute_set(c.image_id, row)
            assert c.text == f"{render_template(truth)} a {row[AttributeKey.gender]} walking on the street"
            assert c.confidence == 1.0

    def test_a2t_only_captions(self, corpus, small_config):
        config = apply_overrides(small_config, caption_parts="a2t")
        captions, _ = gtr_service.generate_captions(corpus, config)
        assert all(c.ic_caption == "" and c.text.endswith(".") for c in captions)

    def test_independent_of_beta(self, corpus, small_config):
        a, _ = gtr_service.generate_captions(corpus, apply_overrides(small_config, beta=0.0))
        b, _ = gtr_service.generate_captions(corpus, apply_overrides(small_config, beta=1.2))
        assert a == b

    def test_rerun_is_byte_identical(self, corpus, small_config, tmp_path):
        noisy = apply_overrides(small_config, flip_probability=0.3, confidence_correct_lo=0.8,
                                confidence_flipped_lo=0.2, confidence_flipped_hi=0.6)
        first = gtr_service.run_generation(corpus, noisy, out=tmp_path / "a.jsonl")
        second = gtr_service.run_generation(corpus, noisy, out=tmp_path / "b.jsonl")
        assert first.read_bytes() == second.read_bytes()
        assert len(read_captions(first)) == len(corpus.split("train"))

    def test_lm_mode_writes_style_pairs(self, corpus, small_config):
        config = apply_overrides(small_config, a2t_mode="lm", max_style_texts=10)
        path = gtr_service.run_generation(corpus, config)
        pairs = path.with_suffix(".style_pairs.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(pairs) == 10
        assert {c.source for c in read_captions(path)} == {"lm"}


class TestEvaluation:
    def test_query_sources(self, corpus, small_config):
        gallery = corpus.split("test")
        source, texts = gtr_service.query_texts(corpus, gallery, small_config)
        assert source == "reference"
        assert texts == [corpus.reference_captions[img.image_id] for img in gallery]

        config = apply_overrides(small_config, query_source="template")
        source, texts = gtr_service.query_texts(corpus, gallery, config)
        assert source == "template"
        assert texts[0].startswith("The ")

        config = apply_overrides(small_config, query_source="pseudo")
        assert len(gtr_service.query_texts(corpus, gallery, config)[1]) == len(gallery)

    def test_reference_queries_need_captions(self, corpus, small_config):
        bare = Corpus(images=corpus.images, truth_table=corpus.truth_table)
        config = apply_overrides(small_config, query_source="reference")
        with pytest.raises(ConfigError):
            gtr_service.query_texts(bare, bare.split("test"), config)
        assert gtr_service.query_texts(bare, bare.split("test"), small_config)[0] == "template"

    def test_run_all_writes_report_and_history(self, small_config):
        report = gtr_service.run_all(small_config)
        assert report.Q == report.G == 4
        assert 0.0 <= report.r1 <= report.r5 <= report.r10 <= 1.0
        stored = json.loads(small_config.report_path.read_text(encoding="utf-8"))
        assert stored["map"] == report.map
        assert small_config.report_path.with_suffix(".txt").exists()

        gtr_service.evaluate(small_config, split="val")
        history = pd.read_csv(small_config.history_path)
        assert list(history["split"]) == ["test", "val"]

    def test_run_all_is_deterministic(self, small_config, tmp_path):
        first = gtr_service.run_all(small_config, out=tmp_path / "r1.json")
        second = gtr_service.run_all(small_config, out=tmp_path / "r2.json")
        assert first == second
        assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()

    def test_run_all_twice_gives_identical_files(self, small_config, tmp_path):
        def run(name):
            root = tmp_path / name
            config = apply_overrides(
                small_config, synthetic_identities=50, images_per_identity=4, flip_probability=0.3,
                confidence_correct_lo=0.8, confidence_flipped_lo=0.2, confidence_flipped_hi=0.6,
                manifest_path=root / "manifest.jsonl", style_corpus_path=root / "style.jsonl",
                captions_path=root / "captions.jsonl", model_path=root / "model.joblib",
                report_path=root / "report.json", history_path=root / "history.csv",
            )
            return config, gtr_service.run_all(config)

        (a, first), (b, second) = run("a"), run("b")
        assert len(read_captions(a.captions_path)) == 140
        assert a.captions_path.read_bytes() == b.captions_path.read_bytes()
        assert a.manifest_path.read_bytes() == b.manifest_path.read_bytes()
        assert a.report_path.read_bytes() == b.report_path.read_bytes()
        assert first == second

    def test_sweep_beta(self, small_config):
        config = apply_overrides(small_config, beta_grid=(0.0, 0.8))
        table = gtr_service.sweep_beta(config)
        assert list(table["beta"]) == [0.0, 0.8]
        assert small_config.report_path.with_suffix(".beta_sweep.csv").exists()
        assert np.all((table["map"] > 0) & (table["map"] <= 1))


class TestConfigPath:
    def test_bundled_name(self):
        assert gtr_service.config_path("synthetic50.cfg") == gtr_service.CONFIG_DIR / "synthetic50.cfg"

    def test_existing_path_kept(self, tmp_path):
        path = tmp_path / "synthetic50.cfg"
        path.write_text("seed=1\n", encoding="utf-8")
        assert gtr_service.config_path(path) == path

    def test_unknown_name_kept(self):
        assert gtr_service.config_path("nope.cfg").name == "nope.cfg"
