import pytest

from surt.config import (ConfigError, ExperimentConfig, config_dict,
                         parse_config, serialize_config)


def test_defaults_parse_and_validate():
    cfg = parse_config("")
    assert cfg.data.n_train == 2000
    assert cfg.model.encoder == "rnnt"
    assert cfg.eval.thresholds == (5, 7, 9)


def test_parse_overrides_and_comments():
    text = """
    # experiment
    data.n_train = 50
    model.encoder = tt
    model.chunk = 8   # one third of a second
    loss.alpha = 2.0
    loss.eos = true
    eval.thresholds = 3,5
    """
    cfg = parse_config(text)
    assert cfg.data.n_train == 50
    assert cfg.model.chunk == 8
    assert cfg.loss.alpha == 2.0
    assert cfg.eval.thresholds == (3, 5)


def test_unknown_key_is_error_with_key_name():
    with pytest.raises(ConfigError, match="data.n_trian"):
        parse_config("data.n_trian = 5")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("nosuch.key = 5")


def test_type_errors_report_key_and_reason():
    with pytest.raises(ConfigError, match="integer"):
        parse_config("data.n_train = many")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config("loss.eos = maybe")


def test_chunk_required_iff_tt():
    with pytest.raises(ConfigError, match="model.chunk"):
        parse_config("model.encoder = tt")
    with pytest.raises(ConfigError, match="model.chunk"):
        parse_config("model.chunk = 4")  # rnnt mode must not set it
    cfg = parse_config("model.encoder = tt\nmodel.chunk = 8")
    assert cfg.model.chunk == 8


def test_validation_rules():
    with pytest.raises(ConfigError, match="loss.alpha"):
        parse_config("loss.alpha = -1")
    with pytest.raises(ConfigError, match="positive"):
        parse_config("train.batch = 0")
    with pytest.raises(ConfigError, match="loss.rule"):
        parse_config("loss.rule = both")


def test_roundtrip_modulo_comments_and_ordering():
    text = "loss.alpha = 2.0\ndata.n_train = 7  # trailing comment\n"
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert config_dict(cfg) == config_dict(again)
    # serialization is a fixed point
    assert serialize_config(cfg) == serialize_config(again)


def test_config_dict_flat_keys():
    d = config_dict(ExperimentConfig())
    assert d["data.n_train"] == 2000
    assert d["eval.thresholds"] == [5, 7, 9]
    assert d["loss.eos"] is True
