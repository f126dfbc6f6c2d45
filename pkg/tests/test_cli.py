import json
import subprocess
import sys

import pytest

from mapeval.cli import build_parser, main
from mapeval.scene_io import archive_to_dict, write_archive
from mapeval.synthetic import PerturbationSpec, generate_scene, perturb


@pytest.fixture
def synth_dir(tmp_path):
    gt = generate_scene(6, 4, 3, seed=0, n_frames=2, scene_id="s0")
    pred, _ = perturb(gt, PerturbationSpec(point_jitter_sigma=0.4, confidence_noise=0.5, seed=0))
    write_archive(gt, tmp_path / "gt.json")
    write_archive(pred, tmp_path / "pred.json")
    return tmp_path


def test_eval_identity(tmp_path, capsys):
    gt = generate_scene(6, 4, 3, seed=1, scene_id="s")
    write_archive(gt, tmp_path / "gt.json")
    write_archive(perturb(gt, PerturbationSpec())[0], tmp_path / "pred.json")
    code = main(["eval", "--gt", str(tmp_path / "gt.json"), "--pred", str(tmp_path / "pred.json"),
                 "--out", str(tmp_path / "r.json")])
    assert code == 0
    assert json.loads((tmp_path / "r.json").read_text())["metrics"]["olus"] == 1.0
    out = capsys.readouterr().out
    assert "OLUS" in out and "100.00%" in out


def test_eval_misaligned_frames(synth_dir, capsys):
    doc = json.loads((synth_dir / "pred.json").read_text())
    doc["frames"][1]["frame_id"] = "000009"
    (synth_dir / "pred.json").write_text(json.dumps(doc))
    code = main(["eval", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert "'000001'" in err and "'000009'" in err


def test_eval_drop_two_of_ten(tmp_path):
    gt = generate_scene(10, 0, 0, seed=0, scene_id="s")
    write_archive(gt, tmp_path / "gt.json")
    write_archive(perturb(gt, PerturbationSpec(drop_rate=0.2, seed=0))[0], tmp_path / "pred.json")
    assert main(["eval", "--gt", str(tmp_path / "gt.json"), "--pred", str(tmp_path / "pred.json"),
                 "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["metrics"]["det_l"] == 0.8


def test_eval_invalid_file_exits_2(synth_dir, capsys):
    doc = json.loads((synth_dir / "pred.json").read_text())
    doc["frames"][0]["lane_segments"][0]["centerline"].pop()
    (synth_dir / "pred.json").write_text(json.dumps(doc))
    assert main(["eval", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json")]) == 2
    assert "lane0" in capsys.readouterr().err


def test_eval_missing_path_and_bad_flags(synth_dir):
    gt, pred = str(synth_dir / "gt.json"), str(synth_dir / "pred.json")
    assert main(["eval", "--gt", str(synth_dir / "nope.json"), "--pred", pred]) == 2
    assert main(["eval", "--gt", gt, "--pred", pred, "--workers", "0"]) == 2
    assert main(["eval", "--gt", gt, "--pred", pred, "--thresholds-frechet", "1,x"]) == 2
    assert main(["eval", "--gt", gt, "--pred", pred, "--thresholds-frechet", "-1"]) == 2


def test_config_file_and_flag_precedence(synth_dir):
    gt, pred = str(synth_dir / "gt.json"), str(synth_dir / "pred.json")
    (synth_dir / "cfg.json").write_text(json.dumps({"thresholds-frechet": "0.5", "format": "json"}))
    assert main(["eval", "--gt", gt, "--pred", pred, "--config", str(synth_dir / "cfg.json"),
                 "--out", str(synth_dir / "a.json")]) == 0
    assert json.loads((synth_dir / "a.json").read_text())["config"]["frechet_thresholds"] == [0.5]
    assert main(["eval", "--gt", gt, "--pred", pred, "--config", str(synth_dir / "cfg.json"),
                 "--thresholds-frechet", "2", "--out", str(synth_dir / "b.json")]) == 0
    assert json.loads((synth_dir / "b.json").read_text())["config"]["frechet_thresholds"] == [2.0]
    (synth_dir / "bad.json").write_text(json.dumps({"colour": 1}))
    assert main(["eval", "--gt", gt, "--pred", pred, "--config", str(synth_dir / "bad.json")]) == 2


def test_eval_table_format(synth_dir):
    assert main(["eval", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json"),
                 "--format", "table", "--out", str(synth_dir / "r.txt")]) == 0
    assert (synth_dir / "r.txt").read_text().startswith("metric")


def test_workers_give_identical_reports(synth_dir):
    outs = []
    for w in ("1", "3"):
        path = synth_dir / f"r{w}.json"
        assert main(["eval", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json"),
                     "--workers", w, "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def subcommands():
    parser = build_parser()
    action = next(a for a in parser._actions if a.dest == "command")
    return action.choices


@pytest.mark.parametrize("name", sorted(subcommands()))
def test_help_exits_zero_and_lists_flags(name, capsys):
    sub = subcommands()[name]
    with pytest.raises(SystemExit) as info:
        main([name, "--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_top_level_help_runs_as_module():
    proc = subprocess.run([sys.executable, "-m", "mapeval", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "eval" in proc.stdout


def test_rasterize_writes_pgm_and_csv(synth_dir, capsys):
    for kind in ("sdmap", "lanes", "areas"):
        prefix = synth_dir / f"m_{kind}"
        assert main(["rasterize", "--gt", str(synth_dir / "gt.json"), "--kind", kind, "--out", str(prefix)]) == 0
        assert prefix.with_suffix(".pgm").read_text().startswith("P2\n100 200\n")
        assert prefix.with_suffix(".csv").read_text().startswith("row,col\n")
    assert "cells marked" in capsys.readouterr().out
    assert main(["rasterize", "--gt", str(synth_dir / "gt.json"), "--frame", "zzz", "--out",
                 str(synth_dir / "x")]) == 2


def test_synth_then_eval_matches_expected(tmp_path):
    out = tmp_path / "set"
    assert main(["synth", "--out", str(out), "--scenes", "3", "--lanes", "10", "--areas", "0", "--tes", "0",
                 "--drop-rate", "0.2", "--seed", "5"]) == 0
    expected = json.loads((out / "expected.json").read_text())
    assert sorted(expected) == ["scene_0000", "scene_0001", "scene_0002"]
    assert all(e["det_l"] == pytest.approx(0.8) for e in expected.values())
    assert main(["eval", "--gt", str(out / "gt"), "--pred", str(out / "pred"), "--out", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["metrics"]["det_l"] == 0.8
    assert main(["synth", "--out", str(out), "--drop-rate", "3"]) == 2
    assert main(["synth", "--out", str(out), "--lanes", "99"]) == 2


def test_loss_check(synth_dir, capsys):
    assert main(["loss-check", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json"),
                 "--out", str(synth_dir / "l.json")]) == 0
    table = capsys.readouterr().out
    for name in ("L_ls", "L_a", "L_te", "L_ll", "L_lt"):
        assert name in table
    doc = json.loads((synth_dir / "l.json").read_text())
    assert doc["L_ls"] > 0


def test_validate(synth_dir, capsys):
    assert main(["validate", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json")]) == 0
    assert capsys.readouterr().out.count(": ok") == 2
    doc = archive_to_dict(generate_scene(3, 1, 1, seed=0))
    doc["frames"][0]["areas"][0]["class_id"] = 9
    (synth_dir / "bad.json").write_text(json.dumps(doc))
    (synth_dir / "broken.json").write_text("{")
    assert main(["validate", "--gt", str(synth_dir / "bad.json"), "--gt", str(synth_dir / "broken.json")]) == 2
    out = capsys.readouterr().out
    assert "area0" in out and "broken.json:1:" in out
    assert main(["validate"]) == 2


def test_internal_error_exits_1(synth_dir, monkeypatch, capsys):
    import mapeval.cli as cli

    def boom(*a, **k):
        raise RuntimeError("kaput")
    monkeypatch.setattr(cli, "evaluate", boom)
    assert main(["eval", "--gt", str(synth_dir / "gt.json"), "--pred", str(synth_dir / "pred.json")]) == 1
    assert "kaput" in capsys.readouterr().err
