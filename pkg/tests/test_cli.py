import io
import json
import logging

import pytest

from ncot import cli
from ncot.serialization import dumps

ARB = {"n": 2, "edges": [{"from": 1, "to": 2, "price": 0.8}, {"from": 2, "to": 1, "price": 1.5}]}
FAIR = {"n": 2, "edges": [{"from": 1, "to": 2, "price": 0.5}, {"from": 2, "to": 1, "price": 1.6}]}
ONE_TWO = {
    "mu": {"weights": [1.0]},
    "nu": {"weights": [0.5, 0.5]},
    "cost": [[0.0, 1.0]],
    "mass_change": [[1.0, 0.5]],
}


def _write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_check_arbitrage_names_the_cycle(tmp_path):
    code, out, _ = run("check-arbitrage", "-i", _write(tmp_path, "m.json", ARB))
    rep = json.loads(out)
    assert code == 0 and rep["arbitrage"] is True
    assert sorted(map(tuple, rep["cycle"])) == [(1, 2), (2, 1)]
    assert rep["product"] == pytest.approx(1.2)
    code, out, _ = run("check-arbitrage", "-i", _write(tmp_path, "f.json", FAIR))
    assert code == 0 and json.loads(out)["arbitrage"] is False


def test_prices_and_arbitrage_error(tmp_path):
    code, out, _ = run("prices", "-i", _write(tmp_path, "f.json", FAIR))
    assert code == 0 and json.loads(out) == {"prices": [1.0, 2.0], "consistent": True}
    code, out, _ = run("prices", "-i", _write(tmp_path, "m.json", ARB))
    err = json.loads(out)["error"]
    assert code == 1 and err["exit_code"] == 1 and err["cycle"]["arbitrage"] is True


def test_ot_solve_example(tmp_path):
    code, out, _ = run("ot-solve", "-i", _write(tmp_path, "i.json", ONE_TWO))
    rep = json.loads(out)
    assert code == 0
    assert rep["value"] == pytest.approx(2 / 3, abs=1e-12)
    assert rep["Z"] == pytest.approx(2 / 3, abs=1e-12)
    assert rep["certificate"]["accepted"] is True


def test_rebalance_on_target_is_a_zero_trade(tmp_path):
    doc = {"market": FAIR, "units": [1.0, 2.0], "nu": [0.2, 0.8]}
    code, out, _ = run("rebalance", "-i", _write(tmp_path, "r.json", doc))
    rep = json.loads(out)
    assert code == 0 and rep["cost"] == 0.0 and rep["trade"] == []


def test_inputs_are_merged(tmp_path):
    a = _write(tmp_path, "a.json", {"market": FAIR})
    b = _write(tmp_path, "b.json", {"units": [1.0, 0.0], "nu": [0.5, 0.5]})
    code, out, _ = run("rebalance", "-i", a, "-i", b)
    rep = json.loads(out)
    assert code == 0 and rep["cost"] >= 0.0
    assert rep["proportions"] == pytest.approx([0.5, 0.5], abs=1e-8)


def test_domain_error_exit_one(tmp_path):
    doc = dict(ONE_TWO, cost=[[0.0, None]])
    code, out, _ = run("ot-solve", "-i", _write(tmp_path, "i.json", doc))
    assert code == 1 and json.loads(out)["error"]["exit_code"] == 1


@pytest.mark.parametrize(
    "argv",
    [
        ("ot-solve",),
        ("no-such-command",),
        ("ot-solve", "--tol-feas", "-1"),
        ("ot-sweep", "--z-grid", "a,b"),
    ],
)
def test_usage_errors_exit_two(argv, capsys):
    assert run(*argv)[0] == 2


def test_malformed_input_exit_two(tmp_path):
    code, _, err = run("ot-solve", "-i", _write(tmp_path, "bad.json", "{not json"))
    assert code == 2 and json.loads(err)["error"]["exit_code"] == 2
    code, _, err = run("ot-solve", "-i", _write(tmp_path, "bad.json", {"mu": {}}))
    assert code == 2
    code, _, _ = run("ot-solve", "-i", str(tmp_path / "missing.json"))
    assert code == 2


def test_output_file_round_trip(tmp_path):
    dest = tmp_path / "out.json"
    code, out, _ = run("ot-solve", "-i", _write(tmp_path, "i.json", ONE_TWO), "-o", str(dest))
    assert code == 0 and out == ""
    text = dest.read_text()
    assert dumps(json.loads(text)) + "\n" == text


def test_pretty_is_not_json(tmp_path):
    dest = tmp_path / "out.json"
    code, out, _ = run("ot-solve", "-i", _write(tmp_path, "i.json", ONE_TWO), "--pretty", "-o", str(dest))
    assert code == 0 and "value" in out
    with pytest.raises(json.JSONDecodeError):
        json.loads(out)
    json.loads(dest.read_text())


def test_ot_sweep_and_dual(tmp_path):
    path = _write(tmp_path, "i.json", ONE_TWO)
    code, out, _ = run("ot-sweep", "-i", path, "--z-grid", "0.5,0.6,0.75,1.0")
    rep = json.loads(out)
    assert code == 0 and rep["feasible_interval"] == [0.5, 1.0]
    assert rep["ncot_value"] == pytest.approx(2 / 3)
    code, out, _ = run("ot-dual", "-i", path)
    rep = json.loads(out)
    assert code == 0 and rep["certificate"]["accepted"] is True


def test_demos_are_deterministic(tmp_path):
    snaps = tmp_path / "s.csv"
    first = run("ot-dynamics", "--seed", "3", "--snapshots", str(snaps))
    second = run("ot-dynamics", "--seed", "3")
    assert first[0] == 0 and json.loads(first[1])["dual_map_inverts"] is True
    a, b = json.loads(first[1]), json.loads(second[1])
    a.pop("snapshots")
    assert a == b
    assert snaps.read_text().startswith("t,particle,position,weight")
    code, out, _ = run("ot-maps", "--k", "0.1", "--grid-size", "32")
    assert code == 0 and json.loads(out)["reports"][0]["is_map"] is True


def test_log_level_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NCOT_LOG", "DEBUG")
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    root.handlers = []
    try:
        assert run("prices", "-i", _write(tmp_path, "f.json", FAIR))[0] == 0
        assert logging.getLogger("ncot").isEnabledFor(logging.DEBUG)
    finally:
        root.handlers, lvl = saved
        root.setLevel(lvl)
