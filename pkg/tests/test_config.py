import pytest

from asm2tv.config import ConfigError, RunConfig, apply_overrides, load_config, parse_config_text


class TestParse:
    def test_comments_and_blanks(self):
        text = "# header\n\nlambda = 0.5   # inline\nseed=3\n"
        assert parse_config_text(text) == {"lambda": "0.5", "seed": "3"}

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_config_text("lambda 0.5\n")


class TestLoad:
    def test_defaults(self):
        rc = load_config()
        assert rc.lam == 1.0 and rc.mu == 0.1 and rc.n_blocks == 4 and rc.lr == 3e-4

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lambda = 0.5\nseed = 3\nupsample = false\n")
        rc = load_config(path, {"seed": "7"})
        assert rc.lam == 0.5 and rc.seed == 7 and rc.upsample is False

    def test_unknown_key_is_named(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("bogus_key = 1\n")
        with pytest.raises(ConfigError) as info:
            load_config(path)
        assert info.value.key == "bogus_key"

    def test_bad_value(self):
        with pytest.raises(ConfigError) as info:
            load_config(None, {"n_blocks": "four"})
        assert "n_blocks" in str(info.value)

    def test_validation(self):
        with pytest.raises(ConfigError):
            load_config(None, {"dropout": 1.5})
        with pytest.raises(ConfigError):
            load_config(None, {"tau0": 0.1, "tau_min": 0.5})
        with pytest.raises(ConfigError):
            load_config(None, {"model": "transformer"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")


def test_text_roundtrip(tmp_path):
    rc = RunConfig(lam=0.25, seed=9, manifest="data/m.json", upsample=False)
    rc.save(tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == rc


def test_overrides_accept_attribute_and_dashed_names():
    rc = apply_overrides(RunConfig(), {"lam": 0.0, "batch-labeled": "8"})
    assert rc.lam == 0.0 and rc.batch_labeled == 8
    assert rc.replace(**{"lambda": 2}).lam == 2.0
