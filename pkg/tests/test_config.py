import pytest

from qsar.config import ConfigError, RunConfig, build_config, dump_config, load_config, parse_config_text


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_parse_comments_and_dashes():
    text = "# run\nmodel = dualpath  # inline\n\nlearning-rate = 0.01\n"
    assert parse_config_text(text) == {"model": "dualpath", "learning_rate": "0.01"}


def test_parse_rejects_malformed_lines():
    with pytest.raises(ConfigError, match="2"):
        parse_config_text("model = magqt\njust words\n")
    with pytest.raises(ConfigError):
        parse_config_text(" = 3\n")


def test_defaults():
    cfg = build_config({})
    assert (cfg.model, cfg.strategy, cfg.n_classes) == ("magqt", "s1", 3)
    assert cfg.train.learning_rate == 1e-4 and cfg.train.epochs == 40 and cfg.train.batch_size == 16
    assert cfg.data is None


@pytest.mark.parametrize("model,strategy", [("dualpath", "s4"), ("pure", "s5"), ("MagQT", "s1")])
def test_strategy_follows_model(model, strategy):
    assert build_config({"model": model}).strategy == strategy


def test_types_are_coerced():
    cfg = build_config({"epochs": "5", "class_weighted": "yes", "adam_betas": "0.8, 0.99", "data": "none"})
    assert cfg.train.epochs == 5 and cfg.train.class_weighted is True
    assert cfg.train.adam_betas == (0.8, 0.99) and cfg.data is None


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("values", [
    {"model": "magqt", "strategy": "s5"},
    {"model": "dualpath", "strategy": "s2"},
    {"model": "pure", "n_classes": "2"},
    {"model": "cnn"},
    {"strategy": "s9"},
    {"n_classes": "1"},
    {"epochs": "many"},
    {"dropout_p": "1.5"},
    {"eta_min": "1", "learning_rate": "0.1"},
    {"colour": "red"},
])
def test_invalid_configs(values):
    with pytest.raises(ConfigError):
        build_config(values)


# ---------------------------------------------------------------------------
# files and overrides
# ---------------------------------------------------------------------------

def test_flags_override_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("model = pure\nepochs = 7\nlearning_rate = 0.1\n")
    cfg = load_config(p, {"epochs": 2, "seed": None})
    assert cfg.model == "pure" and cfg.train.epochs == 2 and cfg.train.learning_rate == 0.1
    assert cfg.train.seed == 0


def test_dump_round_trip(tmp_path):
    cfg = build_config({"model": "dualpath", "epochs": "3", "class_weighted": "true", "data": "x/y"})
    p = tmp_path / "c.txt"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg
    assert load_config(None) == RunConfig().validate()
