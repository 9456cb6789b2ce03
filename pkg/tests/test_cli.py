import json
from pathlib import Path

import pytest

from sdpareto import cli
from sdpareto.errors import InvariantError

MODELS = Path(__file__).resolve().parent.parent / "models"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_pareto_csv_rows(capsys, tmp_path):
    target = tmp_path / "curve.csv"
    code, out, _ = run(capsys, "pareto", MODELS / "three_point.json", "--eta", "1e-6", "--arith", "rational",
                       "--out", target)
    assert code == 0
    assert out.splitlines() == ["o1,o2", "0.3,0.1", "0.27,0.3", "0.2,0.4"]
    assert target.read_text() == out


def test_pareto_plot(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    target = tmp_path / "c.csv"
    code, _, _ = run(capsys, "pareto", MODELS / "three_point.json", "--out", target, "--plot")
    assert code == 0
    assert (tmp_path / "c.svg").read_text().lstrip().startswith("<?xml")


def test_check_comp_and_mono_agree(capsys):
    code, out, _ = run(capsys, "check", MODELS / "loop_ab.json", "--epsilon", "1e-6")
    assert code == 0
    comp = json.loads(out)
    assert comp["lower"] <= 35 / 79 + 1e-9 <= comp["upper"] + 2e-9
    assert comp["replayed"] == pytest.approx(comp["lower"], abs=1e-9)
    code, out, _ = run(capsys, "check", MODELS / "loop_ab.json", "--engine", "mono", "--arith", "rational")
    assert json.loads(out)["lower"] == "35/79"


def test_eta_zero_with_floats_is_a_config_error(capsys):
    code, _, err = run(capsys, "check", MODELS / "loop_ab.json", "--eta", "0")
    assert code == 1
    assert "rational" in err


def test_missing_file_and_bad_document(capsys, tmp_path):
    assert run(capsys, "mono", tmp_path / "nope.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"models": {}, "terms": {}}')
    code, _, err = run(capsys, "mono", bad)
    assert code == 1 and "no root" in err


def test_resource_cap_exit_code(capsys, monkeypatch):
    monkeypatch.setenv("SDP_ITER_CAP", "1")
    code, out, err = run(capsys, "mono", MODELS / "three_point.json", "--arith", "rational", "--eta", "0")
    assert code == 2
    assert "resource cap" in err
    assert json.loads(out)["engine"] == "partial"


def test_invariant_breach_exit_code(capsys, monkeypatch):
    def boom(cfg):
        raise InvariantError("broken")

    monkeypatch.setitem(cli.COMMANDS, "mono", boom)
    assert run(capsys, "mono", MODELS / "three_point.json")[0] == 3


def test_mono_report(capsys):
    code, out, _ = run(capsys, "mono", MODELS / "bounce.json", "--arith", "rational", "--eta", "0")
    rep = json.loads(out)
    assert code == 0
    assert rep["engine"] == "mono" and rep["E"] == "0" and rep["states"] == 7
    assert rep["entrances"][0]["lower"] == [["9/10"]]


def test_compare_on_a_tiny_room_chain(capsys, tmp_path):
    target = tmp_path / "cmp.json"
    code, out, _ = run(capsys, "compare", MODELS / "room_chain.json", "--eta", "1e-4", "--out", target)
    assert code == 0
    payload = json.loads(target.read_text())
    assert payload["sandwich_ok"]
    mono, comp = payload["mono"], payload["comp"]
    lo_m = max(v[0] for v in mono["entrances"][0]["lower"])
    lo_c = max(v[0] for v in comp["entrances"][0]["lower"])
    hi_m = max(v[0] for v in mono["entrances"][0]["upper"])
    hi_c = max(v[0] for v in comp["entrances"][0]["upper"])
    assert lo_c <= hi_m + 2e-4 and lo_m <= hi_c + 2e-4
    assert abs(lo_m - lo_c) <= 2e-4
    assert out.splitlines()[0].startswith("mono")


def test_bench_runs_a_family(capsys):
    code, out, _ = run(capsys, "bench", "--family", "chain", "--size", "4", "--leaf", "rms")
    rep = json.loads(out)
    assert code == 0 and rep["engine"] == "comp" and rep["leaf_runs"] == 1


def test_bench_needs_a_family(capsys):
    assert run(capsys, "bench")[0] == 1


def test_term_selection(capsys):
    code, out, _ = run(capsys, "mono", MODELS / "room_chain.json", "--term", "pair")
    assert code == 0 and json.loads(out)["engine"] == "mono"
