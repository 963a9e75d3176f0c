"""Config parsing tests: every reachable error is a diagnostic with file and
line, and the merge order is defaults, then file, then flag overrides."""

import pytest

from cpsda.config import load_cli_config, parse_sections
from cpsda.datamodel import LabelRule
from cpsda.errors import InvalidConfig
from cpsda.train import Optimizer


def _cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text, encoding="utf-8")
    return p


def test_defaults_without_file():
    cfg = load_cli_config(None)
    assert cfg.run.sequence_length == 25
    assert cfg.run.latent_dim == 512
    assert cfg.train.epochs == 20
    assert cfg.data.train_fraction == 0.8
    assert cfg.synth.n_source == 20_000


def test_file_values_override_defaults(tmp_path):
    p = _cfg(tmp_path, """
[run]
sequence_length = 10
[train]
epochs = 3
learning_rate = 0.01
optimizer = sgd
[data]
train_fraction = 0.7
""")
    cfg = load_cli_config(p)
    assert cfg.run.sequence_length == 10
    assert cfg.train.epochs == 3
    assert cfg.train.learning_rate == 0.01
    assert cfg.train.optimizer is Optimizer.SGD
    assert cfg.data.train_fraction == 0.7
    # untouched sections keep defaults
    assert cfg.run.latent_dim == 512


def test_seed_override_pins_all_seeds(tmp_path):
    p = _cfg(tmp_path, "[run]\nseed = 3\n[synth]\nseed = 4\n[train]\nseed = 5\n")
    cfg = load_cli_config(p, seed_override=99)
    assert cfg.run.seed == 99
    assert cfg.synth.seed == 99
    assert cfg.train.seed == 99


def test_seeds_inherit_run_seed_unless_explicit(tmp_path):
    p = _cfg(tmp_path, "[run]\nseed = 11\n")
    cfg = load_cli_config(p)
    assert cfg.synth.seed == 11 and cfg.train.seed == 11
    p2 = _cfg(tmp_path, "[run]\nseed = 11\n[train]\nseed = 2\n")
    cfg2 = load_cli_config(p2)
    assert cfg2.train.seed == 2 and cfg2.synth.seed == 11


def test_loss_weight_keys_assemble(tmp_path):
    p = _cfg(tmp_path, "[train]\nlambda_domain = 0\nlambda_tml = 0.5\n")
    cfg = load_cli_config(p)
    assert cfg.train.weights.lambda_domain == 0.0
    assert cfg.train.weights.lambda_tml == 0.5
    assert cfg.train.weights.lambda_dunn == 1.0  # untouched weights keep defaults


def test_label_rule_conversion(tmp_path):
    p = _cfg(tmp_path, "[run]\nlabel_rule = majority\n")
    assert load_cli_config(p).run.label_rule is LabelRule.MAJORITY


def test_unknown_section_is_located(tmp_path):
    p = _cfg(tmp_path, "[run]\nseed = 1\n[tarin]\nepochs = 2\n")
    with pytest.raises(InvalidConfig) as err:
        parse_sections(p)
    assert f"{p}:3" in str(err.value)
    assert "tarin" in str(err.value)


def test_unknown_key_is_located_and_suggests(tmp_path):
    p = _cfg(tmp_path, "[train]\nepoches = 2\n")
    with pytest.raises(InvalidConfig) as err:
        parse_sections(p)
    msg = str(err.value)
    assert f"{p}:2" in msg and "epoches" in msg and "epochs" in msg


def test_duplicate_key_rejected(tmp_path):
    p = _cfg(tmp_path, "[train]\nepochs = 2\nepochs = 3\n")
    with pytest.raises(InvalidConfig) as err:
        parse_sections(p)
    assert f"{p}:3" in str(err.value) and "duplicate" in str(err.value)


def test_key_before_section_rejected(tmp_path):
    p = _cfg(tmp_path, "epochs = 2\n")
    with pytest.raises(InvalidConfig) as err:
        parse_sections(p)
    assert f"{p}:1" in str(err.value)


def test_line_without_equals_rejected(tmp_path):
    p = _cfg(tmp_path, "[train]\nepochs\n")
    with pytest.raises(InvalidConfig) as err:
        parse_sections(p)
    assert f"{p}:2" in str(err.value)


def test_bad_value_reports_key_and_value(tmp_path):
    p = _cfg(tmp_path, "[train]\nepochs = soon\n")
    with pytest.raises(InvalidConfig) as err:
        load_cli_config(p)
    msg = str(err.value)
    assert "[train]" in msg and "epochs" in msg and "soon" in msg


def test_bool_spellings(tmp_path):
    for word, expected in (("true", True), ("Yes", True), ("1", True),
                           ("on", True), ("false", False), ("No", False),
                           ("0", False), ("off", False)):
        p = _cfg(tmp_path, f"[train]\nuse_norm = {word}\n")
        assert load_cli_config(p).train.use_norm is expected
    p = _cfg(tmp_path, "[train]\nuse_norm = maybe\n")
    with pytest.raises(InvalidConfig):
        load_cli_config(p)


def test_comments_and_blank_lines_ignored(tmp_path):
    p = _cfg(tmp_path, "# top comment\n\n[train]\n# inner\nepochs = 2\n\n")
    assert load_cli_config(p).train.epochs == 2


def test_missing_file_is_diagnostic(tmp_path):
    with pytest.raises(InvalidConfig):
        load_cli_config(tmp_path / "absent.cfg")


def test_invalid_field_value_propagates(tmp_path):
    p = _cfg(tmp_path, "[data]\ntrain_fraction = 1.5\n")
    with pytest.raises(InvalidConfig):
        load_cli_config(p)


def test_eval_domains_list(tmp_path):
    p = _cfg(tmp_path, "[eval]\ndomains = target\n")
    assert load_cli_config(p).eval.domains == ("target",)
    p2 = _cfg(tmp_path, "[eval]\ndomains = source, target\n")
    assert load_cli_config(p2).eval.domains == ("source", "target")
