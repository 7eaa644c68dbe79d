import pytest

from irfcp.config import PRESETS, ExperimentConfig, config_from_mapping, load_config, preset_network
from irfcp.errors import ConfigError
from irfcp.network import ALIGNED


class TestPresets:
    def test_star4(self):
        net = preset_network("star4")
        assert net.d == 4 and len(net.edges) == 3
        assert all(1 in (e.i, e.j) for e in net.edges)
        assert list(net.rhos) == [0.1] * 4
        for f, g in net.extended_specs:
            assert (f.mean, f.variance, g.mean, g.variance) == (0.0, 1.0, 1.0, 1.0)

    def test_all_presets_build(self):
        for name in PRESETS:
            assert preset_network(name).is_tree

    def test_unknown(self):
        with pytest.raises(ConfigError):
            preset_network("ring")


class TestExperimentConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.preset == "star4"
        assert (cfg.horizon, cfg.alpha, cfg.kappa_bar, cfg.eps) == (100, 0.01, 1.0, 0.0)

    @pytest.mark.parametrize("kwargs", [
        {"horizon": 0}, {"reps": 0}, {"alpha": 0.0}, {"alpha": 1.0},
        {"edge_convention": "late"}, {"max_lambda": 0}, {"workers": 0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(preset_network("pair"), **kwargs)

    def test_classic_model_needs_one_node(self):
        with pytest.raises(ConfigError):
            load_config(preset="star4").classic_model()
        assert load_config(preset="classic").classic_model().rho == 0.1


class TestFileFormat:
    def test_full_file(self, tmp_path):
        path = tmp_path / "exp.toml"
        path.write_text('''
[experiment]
horizon = 40
alpha = 0.05
reps = 3
seed = 11
edge_convention = "aligned"

[defaults]
rho = 0.2
f = { mean = 0.0, variance = 1.0 }
g = { mean = 2.0, variance = 1.0 }

[[node]]
name = "hub"
rho = 0.5

[[node]]
name = "leaf"

[[edge]]
nodes = ["hub", "leaf"]
g = { mean = -1.0, variance = 4.0 }
''')
        cfg = load_config(path, seed=99)
        assert (cfg.horizon, cfg.alpha, cfg.reps, cfg.seed) == (40, 0.05, 3, 99)
        assert cfg.edge_convention == ALIGNED
        assert cfg.network.names == ("hub", "leaf")
        assert list(cfg.network.rhos) == [0.5, 0.2]
        assert cfg.network.edges[0].g.variance == 4.0
        assert cfg.network.edges[0].f.mean == 0.0
        echo = cfg.echo()
        assert echo["network"]["edges"][0]["nodes"] == ["hub", "leaf"]

    def test_preset_in_file(self, tmp_path):
        path = tmp_path / "p.toml"
        path.write_text('[experiment]\npreset = "pair"\n')
        assert load_config(path).network.d == 2
        assert load_config(path, preset="classic").network.d == 1

    @pytest.mark.parametrize("body", [
        '[experiment]\nhorizn = 3\n',
        '[[node]]\nname = "a"\n',
        '[[node]]\nname = "a"\nrho = 0.1\nf = {mean = 0}\ng = {mean = 1, variance = 1}\n',
        '[defaults]\nrho = 0.1\n[[node]]\nname = "a"\n[[node]]\nname = "a"\n',
        '[defaults]\nrho = 0.1\n[[node]]\nname = "a"\n[[edge]]\nnodes = ["a", "b"]\n',
        '[defaults]\nrho = 2.0\n[[node]]\nname = "a"\n',
        'not toml = = 3',
    ])
    def test_errors(self, tmp_path, body):
        path = tmp_path / "bad.toml"
        path.write_text(body)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.toml")

    def test_mapping_default_laws(self):
        cfg = config_from_mapping({"node": [{"name": "x", "rho": 0.3}]})
        node = cfg.network.nodes[0]
        assert (node.f.mean, node.g.mean) == (0.0, 1.0)
