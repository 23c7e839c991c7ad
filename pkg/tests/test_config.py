import pytest

from drlra.activity import CmmppParams
from drlra.agent import AgentConfig
from drlra.config import OUT_ENV, ExperimentConfig, TransferSpec, config_from_section, load_config


def test_empty_config_is_reference_settings(tmp_path):
    p = tmp_path / "e.cfg"
    p.write_text("")
    cfg = load_config(p)
    assert cfg.m_sequences == 54
    assert cfg.agent == AgentConfig()
    assert cfg.agent.gamma == 0.05 and cfg.agent.alpha == 0.001
    assert cfg.n_drl == "auto"


def test_section_parsing(tmp_path):
    p = tmp_path / "f.cfg"
    p.write_text("[fig3]\nkind = rate_vs_k\ndeltas = 0.3, 0.7\nn_drl_grid = 5, 2\nk_grid = 20, 60\n"
                 "seeds = 0-2, 7\nagent.hidden = 32\nagent.optimizer = sgd\ntraffic = cmmpp\n"
                 "cmmpp.coupling = 0.2\npretrain.p_alarm = 0.5\ntransfer.finetune_eps = none\n"
                 "transfer.fractions = 0, 0.2, 1\n")
    cfg = load_config(p)
    assert cfg.name == "fig3" and cfg.kind == "rate_vs_k"
    assert cfg.deltas == (0.3, 0.7) and cfg.n_drl_grid == (5, 2) and cfg.k_grid == (20, 60)
    assert cfg.seeds == (0, 1, 2, 7)
    assert cfg.agent.hidden == 32 and cfg.agent.optimizer == "sgd"
    assert cfg.traffic.kind == "cmmpp" and cfg.traffic.cmmpp.coupling == 0.2
    assert cfg.transfer.cmmpp.p_alarm == 0.5 and cfg.transfer.finetune_eps is None
    assert cfg.transfer.fractions == (0.0, 0.2, 1.0)


def test_named_section_choice(tmp_path):
    p = tmp_path / "two.cfg"
    p.write_text("[a]\nk_nodes = 5\n[b]\nk_nodes = 7\n")
    assert load_config(p, "b").k_nodes == 7
    with pytest.raises(ValueError, match="several"):
        load_config(p)
    with pytest.raises(ValueError, match=r"\[c\]"):
        load_config(p, "c")


@pytest.mark.parametrize("body,msg", [
    ("k_nodes = 0", "positive"),
    ("kind = figure9", "kind"),
    ("bogus = 1", "unknown key"),
    ("n_total = ten", "n_total"),
    ("seeds = ", "nonempty"),
    ("n_drl = 11", "n_drl"),
    ("traffic = radio", "traffic"),
    ("transfer.fractions = 0, 1.5", "fractions"),
])
def test_bad_values_rejected(tmp_path, body, msg):
    p = tmp_path / "bad.cfg"
    p.write_text(f"[x]\n{body}\n")
    with pytest.raises(ValueError, match=msg):
        load_config(p)


def test_unreadable_config_names_path(tmp_path):
    p = tmp_path / "missing.cfg"
    with pytest.raises(ValueError, match="missing.cfg"):
        load_config(p)
    p.write_text("k_nodes = 3\n")
    with pytest.raises(ValueError, match="cannot parse"):
        load_config(p)


def test_output_dir_env_override(monkeypatch):
    cfg = ExperimentConfig(out_dir="here")
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert str(cfg.output_path) == "here"
    monkeypatch.setenv(OUT_ENV, "/tmp/elsewhere")
    assert str(cfg.output_path) == "/tmp/elsewhere"


def test_direct_construction_checks():
    with pytest.raises(ValueError):
        TransferSpec(fractions=(-0.1,))
    with pytest.raises(ValueError):
        ExperimentConfig(train_fraction=1.0)
    cfg = config_from_section("s", {"cmmpp.p_regular": "0.2"})
    assert cfg.traffic.cmmpp == CmmppParams(p_regular=0.2)
