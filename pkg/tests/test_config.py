import pytest
import yaml

from stripfold import config as cfgmod
from stripfold.config import ConfigError


def test_defaults_resolve():
    cfg = cfgmod.resolve({})
    assert cfg["material"]["eta_b"] == 100.0
    assert cfg["sweep"]["eta_b"] == [100.0]
    sc = cfgmod.build_scenario(cfg)
    assert sc.x_f == pytest.approx(0.165)
    assert sc.nx == 120  # dx/h bound at eta_b = 100
    opts = cfgmod.continuation_options(cfg)
    assert opts.step == 0.01 and opts.dynamic.alpha_m == 2.0
    assert not cfgmod.friction(cfg).enabled


@pytest.mark.parametrize(
    "data, key",
    [
        ({"materail": {}}, "materail"),
        ({"material": {"eta_bb": 3}}, "material.eta_bb"),
        ({"continuation": {"friction": {"on": True}}}, "continuation.friction.on"),
    ],
)
def test_unknown_keys_are_named(data, key):
    with pytest.raises(ConfigError, match=f"unknown key '{key}'"):
        cfgmod.resolve(data)


@pytest.mark.parametrize(
    "data",
    [
        {"material": {"eta_b": "soft"}},
        {"mesh": {"nz": 2.5}},
        {"output": {"svg": 1}},
        {"path": {"generator": "spiral"}},
        {"path": {"generator": "file"}},
        {"model": {"grasp": "glue"}},
        {"sweep": {"z_meters": []}},
        {"material": {"nu": 0.5}},
        {"geometry": {"x_f": 0.05}},
        {"assess": {"paths": ["zigzag"]}},
    ],
)
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        cfgmod.resolve(data)


def test_integers_accepted_for_floats():
    cfg = cfgmod.resolve({"material": {"eta_b": 300}, "sweep": {"z_meters": [0.04, 0.05]}})
    assert isinstance(cfg["material"]["eta_b"], float)
    assert cfg["sweep"]["eta_b"] == [300.0]


def test_hash_is_canonical(tmp_path):
    a = cfgmod.resolve({"material": {"eta_b": 300.0}, "mesh": {"nx": 40}})
    b = cfgmod.resolve({"mesh": {"nx": 40}, "material": {"eta_b": 300}})
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
    assert cfgmod.config_hash(a) != cfgmod.config_hash(cfgmod.resolve({}))


def test_load_relative_path_file(tmp_path):
    (tmp_path / "p.path").write_text("lambda,x,z,theta\n0,0.3,0,0\n1,0.2,0.05,0\n")
    (tmp_path / "c.yaml").write_text(yaml.safe_dump({"path": {"generator": "file", "file": "p.path"}}))
    cfg = cfgmod.load(tmp_path / "c.yaml")
    assert cfg["path"]["file"] == str(tmp_path / "p.path")
    (tmp_path / "bad.yaml").write_text("material: [1, 2\n")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.yaml")
