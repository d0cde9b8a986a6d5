from pathlib import Path

import pytest

from fundus_rdr.model import BackboneKind
from fundus_rdr.preprocessing import NormalizationMethod
from fundus_rdr.runconfig import RunConfig, parse_config_file

CONFIGS_DIR = Path(__file__).resolve().parents[1] / "configs"


class TestParse:
    def test_sections_comments_whitespace(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "# comment\n"
            "\n"
            "training.learning_rate = 0.01\n"
            "split.n_trainval=250\n"
        )
        values = parse_config_file(path)
        assert values == {"training.learning_rate": "0.01", "split.n_trainval": "250"}

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just words\n")
        with pytest.raises(ValueError):
            parse_config_file(path)


class TestRunConfig:
    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("training.batch_size = 32\n")
        rc = RunConfig.load(path, {"training.batch_size": 8})
        assert rc.get_int("training.batch_size", 0) == 8

    def test_none_overrides_ignored(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("training.batch_size = 32\n")
        rc = RunConfig.load(path, {"training.batch_size": None})
        assert rc.get_int("training.batch_size", 0) == 32

    def test_training_config_built_from_values(self):
        rc = RunConfig(
            {
                "training.learning_rate": "0.005",
                "training.normalization": "unit_range",
                "training.backbone": "small_cnn",
                "training.input_size": "64",
            }
        )
        config = rc.training_config()
        assert config.learning_rate == 0.005
        assert config.normalization == NormalizationMethod.UNIT_RANGE
        assert config.backbone.kind == BackboneKind.SMALL_CNN
        assert config.backbone.input_size == 64
        # untouched values keep the published defaults
        assert config.weight_decay == 4e-5
        assert config.patience_epochs == 10
        assert config.min_auc_delta == 0.01

    def test_ensemble_seeds_parsed(self):
        rc = RunConfig({"ensemble.member_seeds": "3, 5, 8"})
        assert rc.ensemble_spec().member_seeds == (3, 5, 8)

    def test_ensemble_default_count(self):
        rc = RunConfig({"ensemble.n_members": "4"})
        assert rc.ensemble_spec(base_seed=10).member_seeds == (10, 11, 12, 13)

    def test_serialize_is_sorted_and_stable(self):
        rc = RunConfig({"b.k": "2", "a.k": "1"})
        assert rc.serialize() == "a.k = 1\nb.k = 2\n"
        assert rc.serialize() == rc.serialize()

    def test_persist_roundtrip(self, tmp_path):
        rc = RunConfig({"training.seed": "7", "split.n_test": "100"})
        path = rc.persist(tmp_path)
        again = RunConfig.load(path)
        assert again.values == rc.values


class TestShippedConfigs:
    def test_fullscale_parses_to_paper_contract(self):
        rc = RunConfig.load(CONFIGS_DIR / "fullscale.cfg")
        assert rc.get_int("split.n_trainval", 0) == 57146
        assert rc.get_int("split.n_test", 0) == 8790
        config = rc.training_config()
        assert config.backbone.kind == BackboneKind.INCEPTION_V3_LIKE
        assert config.learning_rate == 0.001
        assert config.weight_decay == 4e-5
        assert config.patience_epochs == 10
        assert config.min_auc_delta == 0.01
        assert config.normalization == NormalizationMethod.SYMMETRIC_RANGE
        assert config.pretrained_init is True
        assert rc.ensemble_spec().n_members == 10

    def test_synthetic_desk_parses(self):
        rc = RunConfig.load(CONFIGS_DIR / "synthetic-desk.cfg")
        assert rc.get_int("synthetic.n_images", 0) == 3000
        config = rc.training_config()
        assert config.backbone.kind == BackboneKind.SMALL_CNN
        assert config.max_epochs == 50
