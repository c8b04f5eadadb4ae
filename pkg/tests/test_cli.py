import json

import numpy as np
import pytest

from freqmatch import cli
from freqmatch.data import load_episode
from freqmatch.selftest import toy_config


def _toy_ini(tmp_path, **changes):
    path = tmp_path / "toy.ini"
    path.write_text(toy_config(**changes).to_ini())
    return path


def test_train_then_eval(tmp_path, capsys):
    ini = _toy_ini(tmp_path, iterations=4, eval_episodes=5)
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(ini), "--out", str(out), "--log-every", "2"]) == 0
    losses = [json.loads(l) for l in (out / "losses.jsonl").read_text().splitlines()]
    assert [r["iter"] for r in losses] == [0, 1, 2, 3]
    summary = json.loads((out / "eval.jsonl").read_text())
    assert summary["episodes"] == 5
    capsys.readouterr()

    report = tmp_path / "report.jsonl"
    code = cli.main(["eval", "--ckpt", str(out / "checkpoint.famck"), "--episodes", "5",
                     "--seed", str(toy_config().eval_seed), "--out", str(report)])
    assert code == 0
    lines = [json.loads(l) for l in report.read_text().splitlines()]
    assert len(lines) == 6 and lines[-1] == summary
    assert json.loads(capsys.readouterr().out) == summary


def test_resume_appends_to_curve(tmp_path):
    out = tmp_path / "run"
    cli.main(["train", "--config", str(_toy_ini(tmp_path, iterations=2)), "--out", str(out), "--no-eval"])
    ini = _toy_ini(tmp_path, iterations=4)
    code = cli.main(["train", "--config", str(ini), "--out", str(out), "--no-eval",
                     "--resume", str(out / "checkpoint.famck")])
    assert code == 0
    iters = [json.loads(l)["iter"] for l in (out / "losses.jsonl").read_text().splitlines()]
    assert iters == [0, 1, 2, 3]


def test_gen_data_writes_episodes_and_manifest(tmp_path):
    cfg = tmp_path / "gen.ini"
    cfg.write_text("[generate]\nsplit = train\nepisodes = 3\nseed = 9\n[data]\nimage_size = 32\n")
    out = tmp_path / "data"
    assert cli.main(["gen-data", "--config", str(cfg), "--out", str(out)]) == 0
    files = sorted(p.name for p in out.glob("*.famep"))
    assert files == ["episode_00000.famep", "episode_00001.famep", "episode_00002.famep"]
    ep = load_episode(out / files[0])
    assert ep.query.image.shape == (32, 32) and ep.domain == "domA"
    manifest = (out / "manifest.ini").read_text()
    assert "[domain.domB]" in manifest and "[class.3]" in manifest and "[episode.2]" in manifest


def test_analyze_freq_on_arrays(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(32, 32))
    np.save(tmp_path / "a.npy", a)
    np.save(tmp_path / "b.npy", a)
    code = cli.main(["analyze-freq", str(tmp_path / "a.npy"), str(tmp_path / "b.npy"),
                     "--log-magnitude", "--window", "none"])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["spatial"]["nmse"] == 0.0 and rep["settings"]["window"] == "none"


def test_analyze_freq_reads_png(tmp_path, capsys):
    from PIL import Image

    img = (np.random.default_rng(1).uniform(size=(16, 16)) * 255).astype(np.uint8)
    Image.fromarray(img).save(tmp_path / "a.png")
    assert cli.main(["analyze-freq", str(tmp_path / "a.png"), str(tmp_path / "a.png")]) == 0
    assert json.loads(capsys.readouterr().out)["spatial"]["ssim"] == pytest.approx(1.0)


def test_shape_mismatch_is_cli_error(tmp_path, capsys):
    np.save(tmp_path / "a.npy", np.zeros((8, 8)))
    np.save(tmp_path / "b.npy", np.zeros((9, 9)))
    assert cli.main(["analyze-freq", str(tmp_path / "a.npy"), str(tmp_path / "b.npy")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_and_malformed_inputs(tmp_path, capsys):
    assert cli.main(["eval", "--ckpt", str(tmp_path / "nope.famck")]) == 2
    bad = tmp_path / "bad.famck"
    bad.write_bytes(b"FAMCK1\x00")
    assert cli.main(["eval", "--ckpt", str(bad)]) == 2
    ini = tmp_path / "bad.ini"
    ini.write_text("[train]\nbatch = 2\n")
    assert cli.main(["train", "--config", str(ini), "--out", str(tmp_path / "r")]) == 2
    err = capsys.readouterr().err
    assert "freqmatch eval: error" in err and "freqmatch train: error" in err


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code != 0


def test_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4 and "FAIL" not in out
