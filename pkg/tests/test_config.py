import pytest

from cte.config import DEFAULTS, builtin_config_path, env_overrides, load_config
from cte.errors import ConfigError


def test_defaults_validate():
    cfg = load_config()
    assert cfg["corpus"]["target"] == "plumber"
    assert cfg.source is None


def test_builtin_configs_load():
    for name in ("desk", "smoke"):
        cfg = load_config(builtin_config_path(name))
        assert cfg["generate"]["n_levels"] >= 1


def test_env_overrides_are_typed():
    env = {"CTE_GENERATE__TEMPERATURE": "0.5", "CTE_CORPUS__GAMES": "[plumber, castle]", "HOME": "/x", "CTE_NOSECTION": "1"}
    assert env_overrides(env) == {"generate": {"temperature": 0.5}, "corpus": {"games": ["plumber", "castle"]}}
    cfg = load_config(environ=env)
    assert cfg["generate"]["temperature"] == 0.5
    assert cfg["corpus"]["games"] == ["plumber", "castle"]


def test_seed_and_out_override_everything(tmp_path):
    cfg = load_config(seed=7, out=tmp_path, environ={})
    assert all(cfg[s]["seed"] == 7 for s in ("run", "gmm", "autoencoder", "generate"))
    assert cfg.out == tmp_path


def test_digest_tracks_content():
    a, b = load_config(environ={}), load_config(environ={}, overrides={"generate": {"n_levels": 3}})
    assert a.digest() == load_config(environ={}).digest()
    assert a.digest() != b.digest()


@pytest.mark.parametrize(
    "over,match",
    [
        ({"corpus": {"bogus": 1}}, "unknown configuration key"),
        ({"corpus": {"source": "web"}}, "corpus.source"),
        ({"corpus": {"games": ["nope"], "target": "nope"}}, "unknown fixture games"),
        ({"corpus": {"target": "castle", "games": ["plumber"]}}, "corpus.target"),
        ({"gmm": {"k_min": 5, "k_max": 2}}, "k_min"),
        ({"generate": {"temperature": 0}}, "temperature"),
        ({"generate": {"cols": -3}}, "cols"),
        ({"generator": {"epochs": 0}}, "generator.epochs"),
        ({"dbscan": {"seed": "x"}}, "dbscan.seed"),
        ({"corpus": {"source": "vglc", "vglc_root": "/does/not/exist"}}, "vglc_root"),
    ],
)
def test_invalid_configs(over, match):
    with pytest.raises(ConfigError, match=match):
        load_config(overrides=over, environ={})


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(tmp_path / "list.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(tmp_path / "bad.yaml")


def test_every_section_has_defaults():
    assert set(DEFAULTS) >= {"run", "corpus", "gmm", "autoencoder", "dbscan", "generator", "translator", "generate", "metrics"}
