import json
import os

import pytest

from gcnav.cli import main
from gcnav.corpus import corpus_dir


def corpus_world(name):
    return os.path.join(corpus_dir(), name + ".json")


def test_run_writes_report_and_svgs(tmp_path, capsys):
    report = tmp_path / "r.json"
    figs = tmp_path / "figs"
    rc = main(["run", "--world", corpus_world("corridor_door"), "--episodes", "door-then-front,door-then-left",
               "--report", str(report), "--render", str(figs)])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].split("\t")[0] == "episode"
    assert out[-1].startswith("sr=1.000")
    data = json.loads(report.read_text())
    assert data["schema"] == "gcnav-report/1"
    assert [e["episode_id"] for e in data["episodes"]] == ["door-then-front", "door-then-left"]
    assert data["aggregate"]["episode_count"] == 2
    assert sorted(os.listdir(figs)) == [
        "corridor_door__door-then-front.svg", "corridor_door__door-then-left.svg", "summary.svg"]


def test_report_is_byte_stable(tmp_path):
    paths = []
    for name in ("a.json", "b.json"):
        p = tmp_path / name
        main(["run", "--world", corpus_world("two_doors"), "--seed", "3", "--report", str(p)])
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_metrics_command(tmp_path, capsys):
    report = tmp_path / "r.json"
    main(["run", "--world", corpus_world("open_hall"), "--report", str(report)])
    capsys.readouterr()
    assert main(["metrics", "--report", str(report), "--radius", "0.5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1].startswith("sr=") and lines[-1].endswith("radius=0.5")
    # header, one row per episode, stored aggregate, rejudged aggregate
    assert len(lines) == 1 + 8 + 2


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("solver:\n  k_max: 1\ndefaults:\n  delta_phi_deg: 30\nbacktracking: false\n")
    report = tmp_path / "r.json"
    main(["run", "--world", corpus_world("two_doors"), "--episodes", "door-to-plant", "--config", str(cfg),
          "--report", str(report)])
    data = json.loads(report.read_text())
    assert data["config"]["solver"]["k_max"] == 1
    assert data["config"]["backtracking"] is False
    assert data["episodes"][0]["success"] is False


def test_flags_recorded(tmp_path):
    report = tmp_path / "r.json"
    main(["run", "--world", corpus_world("open_hall"), "--episodes", "to-sofa", "--no-backtrack",
          "--relax-constraints", "--report", str(report)])
    cfg = json.loads(report.read_text())["config"]
    assert cfg["relax"] is True and cfg["backtracking"] is False


def test_unknown_episode(capsys):
    assert main(["run", "--world", corpus_world("open_hall"), "--episodes", "nope"]) == 2


def test_dump_graph(tmp_path, capsys):
    f = tmp_path / "i.txt"
    f.write_text("STAGE front ; OBJ door through\nSTAGE left 2\n")
    assert main(["dump-graph", "--instruction", str(f)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["topo_order"] == ["w1", "o1.1", "w2", "w3"]
    assert sorted(c["type"] for c in d["constraints"]) == [1, 2, 3, 4]


def test_dump_graph_document(capsys):
    path = os.path.join(corpus_dir(), "decompositions", "door_then_left.json")
    assert main(["dump-graph", "--instruction", path]) == 0
    assert json.loads(capsys.readouterr().out)["topo_order"] == ["w1", "o1.1", "w2", "w3"]


def test_dump_graph_error(tmp_path, capsys):
    f = tmp_path / "bad.txt"
    f.write_text("STAGE sideways\n")
    assert main(["dump-graph", "--instruction", str(f)]) == 1
    assert "sideways" in capsys.readouterr().err


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
