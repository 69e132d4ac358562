import pytest

from coalbm.config import SimConfig, config_hash, dump_config, parse_config


class TestSimConfig:
    def test_defaults_are_valid(self):
        cfg = SimConfig()
        assert cfg.dt_effective == pytest.approx(cfg.dt / cfg.n**2)

    def test_absolute_dt_mode(self):
        cfg = SimConfig(dt=0.5, dt_scaled=False)
        assert cfg.dt_effective == 0.5

    @pytest.mark.parametrize("bad", [
        dict(n=1),
        dict(topology="torus"),
        dict(m_max=0),
        dict(m_max=20, n=20),
        dict(dt=0.0),
        dict(t_max=-1.0),
        dict(nu=-0.5),
        dict(replicates=0),
        dict(workers=0),
        dict(epsilon=0.7),
        dict(stop="whenever"),
    ])
    def test_invalid_rejected(self, bad):
        with pytest.raises(ValueError):
            SimConfig(**bad)

    def test_override_ignores_none(self):
        cfg = SimConfig().override(n=None, seed=9)
        assert cfg.n == SimConfig().n
        assert cfg.seed == 9


class TestRoundTrip:
    def test_lossless(self):
        cfg = SimConfig(n=37, topology="circle", m_max=4, dt=3.14e-5,
                        dt_scaled=False, t_max=7.25, nu=0.125, seed=99,
                        replicates=321, epsilon=0.015625, growth=0.2)
        assert parse_config(dump_config(cfg)) == cfg

    def test_comments_and_blanks_ignored(self):
        text = "# a comment\n\nn=5\nseed=3  # trailing\n"
        cfg = parse_config(text)
        assert cfg.n == 5 and cfg.seed == 3

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            parse_config("banana=1\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config("n 5\n")

    def test_hash_stability_and_sensitivity(self):
        a = SimConfig(seed=1)
        b = SimConfig(seed=1)
        c = SimConfig(seed=2)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)
        assert len(config_hash(a)) == 12
