import pytest

from teamreconfig.config import ConfigError, ExperimentConfig, format_config, load_config, parse_config


def test_defaults_are_valid_and_round_trip():
    cfg = ExperimentConfig()
    cfg.validate()
    assert parse_config(format_config(cfg)) == cfg
    assert cfg.trials == 200 and cfg.bins == 50 and cfg.hindsight_trials == 30
    assert cfg.p_r == [20.0, 50.0, 80.0] and cfg.hindsight_n == [5, 10, 20]


def test_parse_values_and_comments():
    cfg = parse_config("""
        # desk-scale rerun
        seed = 7
        p_r = 20, 80     # percentages
        box_min = -1, -1, 0
        c_min = 0.4
        acceptance = printed
    """)
    assert cfg.seed == 7 and cfg.p_r == [20.0, 80.0]
    assert cfg.box_min == (-1.0, -1.0, 0.0)
    assert cfg.geometry().c_min == 0.4 and cfg.geometry().c_max == cfg.d_mc
    assert cfg.anneal().acceptance == "printed"
    assert cfg.anneal(seed=3).seed == 3


@pytest.mark.parametrize("text", [
    "colour = red",
    "seed",
    "trials = many",
    "bins = 0",
    "box_min = 1, 2",
    "d_s = 2.0",
    "p_r = 0",
    "acceptance = greedy",
    "n_min = 5\nn_max = 4",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config(tmp_path):
    assert load_config(None) == ExperimentConfig()
    f = tmp_path / "c.cfg"
    f.write_text("trials = 3\n")
    assert load_config(f).trials == 3
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")
