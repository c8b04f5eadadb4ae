import numpy as np
import pytest

from freqmatch import autodiff as ad
from freqmatch.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint
from freqmatch.config import TrainConfig
from freqmatch.errors import ConfigError, ParseError, TrainingError, UnsupportedVersion
from freqmatch.model import FewShotSegmenter
from freqmatch.selftest import toy_config, toy_episode
from freqmatch.trainer import (
    SGD, build, evaluate, load_model, lr_at, oracle_dice, save_model, sgd_step, train,
)


# ---------------------------------------------------------------- schedule and optimizer

def test_lr_schedule_steps_every_thousand():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == lr_at(999, cfg) == 0.001
    assert lr_at(1000, cfg) == pytest.approx(0.95 * 0.001)
    for it in range(0, 40000, 337):
        assert lr_at(it, cfg) == 0.001 * 0.95 ** (it // 1000)


def test_plain_sgd_step():
    (p,), _ = sgd_step([0.0], [1.0], [0.0], lr=0.1, momentum=0.0)
    assert p == pytest.approx(-0.1)


def test_two_momentum_steps():
    p, v = [0.0], [0.0]
    for _ in range(2):
        p, v = sgd_step(p, [1.0], v, lr=0.1, momentum=0.9)
    assert p[0] == pytest.approx(-0.29)


def test_optimizer_class_matches_functional_form():
    x = ad.parameter(np.zeros(()), "x")
    opt = SGD({"x": x}, momentum=0.9)
    for _ in range(2):
        x.grad = np.ones(())
        opt.step(0.1)
    assert float(x.data) == pytest.approx(-0.29)


def test_non_finite_gradient_names_parameter():
    a, b = ad.parameter(np.zeros(2), "a"), ad.parameter(np.zeros(2), "b")
    opt = SGD({"enc.a": a, "fam.b": b})
    a.grad, b.grad = np.ones(2), np.array([1.0, np.nan])
    with pytest.raises(TrainingError, match="fam.b"):
        opt.step(0.1)


# ---------------------------------------------------------------- configuration

def test_ini_round_trip():
    cfg = TrainConfig(components="cpg+fam", band_roles="+ + +", drop_bands=("high",),
                      attention="hard:0.5", pool_n=400, seed=7)
    again = TrainConfig.from_ini(cfg.to_ini())
    assert again == cfg


def test_ini_parses_ablation_keys():
    cfg = TrainConfig.from_ini("[model]\ncomponents = baseline+cpg\nband_ratios = 0.2, 0.6, 0.2\n"
                               "match_bands = mid\n[train]\niterations = 10\n")
    assert cfg.components == "cpg" and cfg.band_ratios == (0.2, 0.6, 0.2)
    assert cfg.match_bands == ("mid",) and cfg.iterations == 10


@pytest.mark.parametrize("text", [
    "[train]\nbogus = 1\n",
    "[nope]\nx = 1\n",
    "[train]\nbatch = 4\n",
    "[model]\ncomponents = cpg+msf\n",
    "[model]\nband_roles = - x -\n",
    "[model]\nband_ratios = 0.5, 0.5, 0.5\n",
    "not an ini",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        TrainConfig.from_ini(text)


# ---------------------------------------------------------------- parameter audit

def test_parameter_audit_matches_toggles():
    names = {c: set(FewShotSegmenter(TrainConfig(components=c)).params) for c in ("cpg", "cpg+fam", "cpg+fam+msf")}
    assert names["cpg"] == {f"encoder.conv{i}.{k}" for i in range(3) for k in "wb"} | {"cpg.tau"}
    fam_only = names["cpg+fam"] - names["cpg"]
    assert len(fam_only) == 18 and all(n.startswith("fam.") for n in fam_only)
    msf_only = names["cpg+fam+msf"] - names["cpg+fam"]
    model = FewShotSegmenter(TrainConfig())
    c = model.params["encoder.conv2.w"].shape[0]
    assert len(msf_only) == 6
    assert all(model.params[n].shape == (c, c) for n in msf_only)


def test_optimizer_registers_each_parameter_once():
    model, opt = build(TrainConfig())
    assert list(opt.params) == list(model.params)
    assert len({id(p) for p in opt.params.values()}) == len(opt.params)
    assert "alpha" not in " ".join(opt.params)


# ---------------------------------------------------------------- checkpoint format

def _toy_state():
    model, opt = build(toy_config())
    for k, p in model.params.items():
        opt.buffers[k] = np.full_like(p.data, 0.25)
    params = {k: p.data for k, p in model.params.items()}
    return model.cfg, params, opt.buffers


def test_checkpoint_round_trip():
    cfg, params, mom = _toy_state()
    buf = encode_checkpoint(cfg, params, mom, 42)
    assert buf[:6] == b"FAMCK1"
    cfg2, p2, m2, it = decode_checkpoint(buf)
    assert cfg2 == cfg and it == 42
    assert list(p2) == list(params)
    for k in params:
        assert p2[k].dtype == np.float32
        np.testing.assert_array_equal(p2[k], params[k])
        np.testing.assert_array_equal(m2[k], mom[k])


def test_checkpoint_truncation_and_version():
    cfg, params, mom = _toy_state()
    buf = encode_checkpoint(cfg, params, mom, 1)
    for cut in (4, 20, len(buf) // 2, len(buf) - 1):
        with pytest.raises(ParseError):
            decode_checkpoint(buf[:cut])
    with pytest.raises(UnsupportedVersion):
        decode_checkpoint(b"FAMCK9" + buf[6:])
    with pytest.raises(ParseError):
        decode_checkpoint(buf + b"x")


def test_restore_rejects_mismatched_model(tmp_path):
    model, opt = build(toy_config(components="cpg"))
    path = tmp_path / "a.famck"
    save_model(path, model, opt, 0)
    cfg, params, mom, it = load_checkpoint(path)
    params.pop("cpg.tau")
    from freqmatch.trainer import _restore
    with pytest.raises(ConfigError):
        _restore(*build(toy_config(components="cpg")), params, mom)


# ---------------------------------------------------------------- training loop

def test_training_is_bit_for_bit_deterministic():
    a = train(toy_config(iterations=6, seed=3)).curve
    b = train(toy_config(iterations=6, seed=3)).curve
    assert a == b
    c = train(toy_config(iterations=6, seed=4)).curve
    assert a != c


def test_curve_records_both_losses(tmp_path):
    res = train(toy_config(iterations=3), out_dir=tmp_path)
    for rec in res.curve:
        assert rec["l_total"] == rec["l_final"] + rec["l_coarse"]
        assert {"iter", "lr", "resampled", "fallback"} <= set(rec)
    assert len((tmp_path / "losses.jsonl").read_text().splitlines()) == 3
    assert (tmp_path / "checkpoint.famck").exists()


def test_resume_matches_uninterrupted_run(tmp_path):
    full = train(toy_config(iterations=6, seed=1))
    first = train(toy_config(iterations=3, seed=1), out_dir=tmp_path)
    resumed = train(toy_config(iterations=6, seed=1), resume=tmp_path / "checkpoint.famck")
    assert [r["l_total"] for r in resumed.curve] == [r["l_total"] for r in full.curve[3:]]
    for k, p in full.model.params.items():
        np.testing.assert_array_equal(resumed.model.params[k].data, p.data)
    ep = toy_episode(5)
    a = full.model.predict(ep.support.image, ep.support.mask, ep.query.image)[0]
    b = resumed.model.predict(ep.support.image, ep.support.mask, ep.query.image)[0]
    np.testing.assert_array_equal(a, b)
    assert first.iteration == 3


def test_saved_model_predicts_identically(tmp_path):
    res = train(toy_config(iterations=2, seed=2))
    save_model(tmp_path / "m.famck", res.model, res.optimizer, res.iteration)
    model, _, it = load_model(tmp_path / "m.famck")
    assert it == 2
    ep = toy_episode(6)
    a = res.model.predict(ep.support.image, ep.support.mask, ep.query.image)[0]
    b = model.predict(ep.support.image, ep.support.mask, ep.query.image)[0]
    assert a.tobytes() == b.tobytes()


def test_smoke_run_lowers_loss_on_most_seeds():
    lowered = 0
    for seed in range(10):
        curve = train(TrainConfig(iterations=200, seed=seed, components="cpg")).curve
        lowered += curve[-1]["l_total"] < curve[0]["l_total"]
    assert lowered >= 9


# ---------------------------------------------------------------- evaluation

def test_untrained_model_sits_near_the_floor():
    report = evaluate(FewShotSegmenter(TrainConfig()), 100)
    assert report["episodes"] == 100 and set(report["per_class"]) == {2, 3}
    assert report["mean_dice"] < 0.3


def test_oracle_predictor_scores_one():
    assert oracle_dice(20) == 1.0


def test_evaluation_is_reproducible():
    model = train(toy_config(iterations=2)).model
    rows_a, rows_b = [], []
    a = evaluate(model, 15, records=rows_a)
    b = evaluate(model, 15, records=rows_b)
    assert a == b and rows_a == rows_b
    assert all(r["class_id"] in (2, 3) for r in rows_a)


def test_scalar_parameter_survives_checkpoint():
    cfg, params, mom = _toy_state()
    _, p2, _, _ = decode_checkpoint(encode_checkpoint(cfg, params, mom, 0))
    assert p2["cpg.tau"].shape == ()
