import json
import subprocess
import sys

import numpy as np
import pytest

from formdom.bundle import random_endomorphism_field, random_unitary_connection
from formdom.cli import main
from formdom.files import (
    InputError,
    bundle_from_dict,
    bundle_to_dict,
    graph_from_dict,
    graph_to_dict,
    load_bundle,
    load_graph,
    load_lengths,
)
from formdom.testing import random_graph

HALF = 2**-0.5


def write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def path5(tmp_path):
    return write(tmp_path / "path5.json", {"n": 5, "edges": [[i, i + 1, 1.0] for i in range(4)]})


@pytest.fixture
def theta_pi(tmp_path):
    g = write(tmp_path / "g.json", {"n": 2, "edges": [[0, 1, 1.0]]})
    b = write(tmp_path / "b.json", {"dim": 1, "phi": [[0, 1, [[-1.0, 0.0]]]]})
    return g, b


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# --- loaders -------------------------------------------------------------------


def test_graph_roundtrip():
    g = random_graph(np.random.default_rng(0), 12)
    back = graph_from_dict(json.loads(json.dumps(graph_to_dict(g))))
    assert back.digest == g.digest


def test_graph_labels():
    g = graph_from_dict({"n": 3, "labels": ["a", "b", "c"], "edges": [["a", "b", 2.0], ["b", "c", 1.0]]})
    assert g.weight(0, 1) == 2.0 and g.weight(1, 2) == 1.0
    with pytest.raises(InputError):
        graph_from_dict({"n": 2, "labels": ["a", "b"], "edges": [["a", "z", 1.0]]})


def test_graph_loader_errors(tmp_path):
    with pytest.raises(InputError, match="duplicate"):
        graph_from_dict({"n": 2, "edges": [[0, 1, 1.0], [1, 0, 1.0]]})
    with pytest.raises(InputError):
        graph_from_dict({"edges": []})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_graph(bad)
    with pytest.raises(InputError):
        load_graph(tmp_path / "missing.json")


def test_bundle_roundtrip():
    g = random_graph(np.random.default_rng(1), 8)
    conn = random_unitary_connection(g, 2, 4)
    w = random_endomorphism_field(g, 2, 5)
    conn2, w2 = bundle_from_dict(json.loads(json.dumps(bundle_to_dict(conn, w))), g)
    assert np.allclose(conn2.phi, conn.phi, atol=1e-15)
    assert np.allclose(w2.w, w.w, atol=1e-15)


def test_bundle_defaults_and_nested_rows(tmp_path):
    g = graph_from_dict({"n": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]]})
    conn, w = bundle_from_dict({"dim": 2, "phi": [[0, 1, [[[0, 0], [1, 0]], [[1, 0], [0, 0]]]]]}, g)
    assert np.allclose(conn.transport(0, 1), [[0, 1], [1, 0]])
    assert np.allclose(conn.transport(1, 2), np.eye(2))
    assert not np.any(w.w)
    with pytest.raises(InputError):
        bundle_from_dict({"dim": 2, "phi": [[0, 1, [[1, 0]]]]}, g)
    with pytest.raises(InputError):
        load_bundle(tmp_path / "absent.json", g)


def test_lengths_loader(tmp_path):
    g = graph_from_dict({"n": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]]})
    lengths = load_lengths(write(tmp_path / "s.json", {"sigma": [[1, 0, 0.5]], "default": 2.0}), g)
    assert lengths.sigma.tolist() == [0.5, 2.0]
    with pytest.raises(InputError):
        load_lengths(write(tmp_path / "t.json", {"lengths": []}), g)


# --- validate -------------------------------------------------------------------


def test_validate_ok(path5, capsys):
    code, out, _ = run(["validate", path5], capsys)
    assert code == 0
    assert json.loads(out)["verdict"] == "PASS"


def test_validate_self_loop(tmp_path, capsys):
    g = write(tmp_path / "loop.json", {"n": 2, "edges": [[0, 0, 1.0], [0, 1, 1.0]]})
    code, _, err = run(["validate", g], capsys)
    assert code == 1
    assert "b1" in err


def test_validate_malformed(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert run(["validate", str(bad)], capsys)[0] == 2


def test_validate_non_unitary_bundle(theta_pi, tmp_path, capsys):
    g, _ = theta_pi
    b = write(tmp_path / "nu.json", {"dim": 1, "phi": [[0, 1, [[2.0, 0.0]]]]})
    code, out, _ = run(["validate", g, "--bundle", b], capsys)
    assert code == 1
    reports = json.loads(out)["reports"]
    assert reports[1]["worst_case"]["invariant"] == "Phi unitary"


# --- dominate -------------------------------------------------------------------


def test_dominate_theta_pi(theta_pi, capsys):
    code, out, _ = run(["dominate", *theta_pi], capsys)
    assert code == 0
    data = json.loads(out)
    assert [r["check"] for r in data["reports"]] == sorted(r["check"] for r in data["reports"])
    assert all(r["verdict"] == "PASS" for r in data["reports"])


def test_dominate_violated_hypothesis(tmp_path, capsys):
    g = write(tmp_path / "g.json", {"n": 2, "c": [1.0, 0.0], "edges": [[0, 1, 1.0]]})
    b = write(tmp_path / "b.json", {"dim": 1})
    code, out, err = run(["dominate", g, b], capsys)
    assert code == 1
    dom = next(r for r in json.loads(out)["reports"] if r["check"] == "domination")
    assert dom["verdict"] == "FAIL" and dom["max_violation"] > 0
    assert "worst" in err


def test_dominate_non_unitary_bundle(theta_pi, tmp_path, capsys):
    b = write(tmp_path / "nu.json", {"dim": 1, "phi": [[0, 1, [[2.0, 0.0]]]]})
    code, _, err = run(["dominate", theta_pi[0], b], capsys)
    assert code == 1 and "unitar" in err


def test_dominate_missing_bundle(theta_pi, tmp_path, capsys):
    assert run(["dominate", theta_pi[0], str(tmp_path / "nope.json")], capsys)[0] == 2


def test_dominate_random_bundle(tmp_path, capsys):
    g = random_graph(np.random.default_rng(3), 10)
    conn = random_unitary_connection(g, 2, 1)
    w = random_endomorphism_field(g, 2, 2)
    gp = write(tmp_path / "g.json", graph_to_dict(g))
    bp = write(tmp_path / "b.json", bundle_to_dict(conn, w))
    assert run(["dominate", gp, bp, "--samples", "8", "--t-grid", "0.1,1"], capsys)[0] == 0


def test_json_byte_identical_except_timestamp(theta_pi, tmp_path, capsys):
    outs = []
    for k in range(2):
        target = tmp_path / f"r{k}.json"
        assert main(["dominate", *theta_pi, "--seed", "5", "--out", str(target)]) == 0
        data = json.loads(target.read_text())
        data.pop("timestamp")
        outs.append(json.dumps(data, sort_keys=True))
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_envelope_contents(theta_pi, capsys):
    _, out, _ = run(["dominate", *theta_pi, "--seed", "11", "--tol-domination", "1e-9"], capsys)
    data = json.loads(out)
    assert data["tool"] == "formdom" and data["version"]
    assert data["seed"] == 11
    assert data["tolerances"]["domination"] == 1e-9
    assert set(data["inputs"]) == set(theta_pi)
    assert all(len(h) == 16 for h in data["inputs"].values())


def test_negative_tolerance_rejected(theta_pi):
    with pytest.raises(SystemExit) as exc:
        main(["dominate", *theta_pi, "--tol-domination", "-1"])
    assert exc.value.code == 2


# --- probe ----------------------------------------------------------------------


def test_probe_path(tmp_path, capsys):
    code, out, _ = run(["probe", "--family", "path", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.strip() == "SUPPORTED"
    rows = (tmp_path / "probe.csv").read_text().strip().splitlines()
    assert rows[0] == "N,scalarGap,magneticGap,resolventDiff"
    assert [int(r.split(",")[0]) for r in rows[1:]] == [25, 50, 100, 200, 400]
    data = json.loads((tmp_path / "probe.json").read_text())
    assert data["verdict"] == "SUPPORTED" and data["probe"]["sizes"] == [25, 50, 100, 200, 400]


def test_probe_usage_errors(tmp_path, capsys):
    assert run(["probe", "--family", "path", "--sizes", "", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["probe", "--family", "torus", "--out", str(tmp_path)], capsys)[0] == 2
    assert run(["probe", "--family", "path", "--sizes", "20,10", "--out", str(tmp_path)], capsys)[0] == 2


# --- metric ---------------------------------------------------------------------


def test_metric_half_sigma_passes(path5, capsys):
    code, out, _ = run(["metric", path5, "--sigma", str(HALF)], capsys)
    assert code == 0
    data = json.loads(out)
    assert [r["verdict"] for r in data["reports"]] == ["PASS", "PASS"]
    assert data["jump_size"] == pytest.approx(HALF)


def test_metric_unit_sigma_fails(path5, capsys):
    code, out, err = run(["metric", path5, "--sigma", "1"], capsys)
    assert code == 1
    assert "worst vertex" in err and "ratio 2" in err
    for r in json.loads(out)["reports"]:
        assert r["worst_case"]["ratio"] == pytest.approx(2.0, abs=1e-12)


def test_metric_sigma_file(path5, tmp_path, capsys):
    s = write(tmp_path / "sigma.json", {"sigma": [], "default": 0.5})
    assert run(["metric", path5, "--sigma", s], capsys)[0] == 0


def test_metric_without_sigma_inconclusive(path5, capsys):
    code, out, err = run(["metric", path5, "--criteria", "completeness"], capsys)
    assert code == 0
    assert json.loads(out)["criteria"]["verdicts"] == {"completeness": "INCONCLUSIVE"}
    assert "INCONCLUSIVE" in err


def test_metric_family(capsys):
    code, out, _ = run(["metric", "--family", "path", "--sizes", "10,20", "--sigma", str(HALF)], capsys)
    assert code == 0
    assert set(json.loads(out)["criteria"]["verdicts"].values()) == {"HOLDS-ON-TRUNCATIONS"}


def test_metric_usage_errors(path5, capsys):
    assert run(["metric"], capsys)[0] == 2
    assert run(["metric", path5, "--criteria", "bogus"], capsys)[0] == 2
    assert run(["metric", path5, "--sigma", "-1"], capsys)[0] == 2


def test_module_entry_point(path5):
    proc = subprocess.run([sys.executable, "-m", "formdom", "validate", path5], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "validate"
