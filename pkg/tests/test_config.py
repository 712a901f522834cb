import pytest

from src.core.config import FoldPolicy, RunConfig, get_num_threads, parse_config, parse_config_text, reload_settings
from src.core.exceptions import ConfigurationError, UnknownConfigKeyError


def test_defaults_resolve_threshold_from_T():
    assert RunConfig().t_s == 900
    assert RunConfig(T=100).t_s == 90
    assert RunConfig(T=2, num_sample_steps=1).t_s == 2


def test_parse_text_skips_comments_and_blank_lines():
    raw = parse_config_text("# header\n\nT = 50   # inline\nlambda = 0.5\n")
    assert raw == {"T": "50", "lambda_": "0.5"}


def test_unknown_key_reports_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("T = 50\nlearning_rat = 0.1\n")
    with pytest.raises(UnknownConfigKeyError) as excinfo:
        parse_config(path)
    assert excinfo.value.details == {"key": "learning_rat", "line": 2}


def test_malformed_line():
    with pytest.raises(ConfigurationError):
        parse_config_text("T 50\n")


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("T = 50\nt_s = 10\nfold_policy = folded\neval_seeds = 4, 5\ndeterministic = no\n")
    config = parse_config(path, {"t_s": 20, "fold_policy": "gated", "seed": None})
    assert config.t_s == 20
    assert config.fold_policy == FoldPolicy.GATED
    assert config.eval_seeds == [4, 5]
    assert config.deterministic is False
    assert config.seed == 0


@pytest.mark.parametrize(
    "overrides",
    [
        {"T": 10, "t_s": 11},
        {"lambda": -0.5},
        {"side": 40},
        {"low_max": 7.0, "high_min": 7.0},
        {"T": 10, "num_sample_steps": 11},
        {"fold_policy": "wrapped"},
        {"steps": "many"},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigurationError):
        parse_config(None, overrides)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config(tmp_path / "absent.cfg")


def test_written_config_parses_back(tiny_config, tmp_path):
    path = tiny_config.write(tmp_path)
    assert path.name == "config.txt"
    assert parse_config(path) == tiny_config


def test_projections_share_values(tiny_config):
    train = tiny_config.train_config()
    assert (train.T, train.t_s, train.lambda_) == (tiny_config.T, tiny_config.t_s, tiny_config.lambda_)
    assert tiny_config.unet_config().level_sides() == [32, 16]
    assert tiny_config.eval_config().seeds == (0,)
    assert tiny_config.resolved_ts_values() == [6, 12, 18]


def test_thread_override_from_environment(monkeypatch):
    monkeypatch.setenv("DIAE_NUM_THREADS", "3")
    try:
        assert reload_settings().runtime.num_threads == 3
        assert get_num_threads() == 3
    finally:
        monkeypatch.delenv("DIAE_NUM_THREADS")
        reload_settings()
