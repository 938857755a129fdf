import json

import numpy as np
import pytest

from conftest import random_bipartite, random_quantum_assemblage
from poststeer import io
from poststeer.assemblage import Scenario, prbox_product
from poststeer.behaviour import Behaviour
from poststeer.cli import EXIT_INPUT, EXIT_NEGATIVE, EXIT_OK, main
from poststeer.fixtures import example_assemblage_json, example_functional
from poststeer.plotting import bloch_xz, write_bloch_svg
from poststeer.reproduce import reproduce_paper
from poststeer.search import random_functional


# ---------------------------------------------------------------- JSON

def test_assemblage_round_trip_is_exact(rng):
    asm = random_quantum_assemblage(rng)
    back = io.decode_assemblage(json.loads(io.dumps(io.encode_assemblage(asm))))
    assert np.array_equal(back.blocks, asm.blocks)


def test_bipartite_and_behaviour_round_trips(rng):
    asm = random_bipartite(rng, 3, 2, n_out=3)
    back = io.decode_bipartite(json.loads(io.dumps(io.encode_bipartite(asm))))
    assert np.array_equal(back.blocks, asm.blocks)
    p = Behaviour(rng.dirichlet(np.ones(8), size=(4, 2, 2)).reshape(4, 2, 2, 2, 2, 2))
    assert np.array_equal(io.decode_behaviour(json.loads(io.dumps(io.encode_behaviour(p)))).table, p.table)


def test_functional_round_trips(rng):
    F = random_functional(rng)
    assert np.array_equal(io.decode_functional(json.loads(io.dumps(io.encode_functional(F)))).operators,
                          F.operators)
    Fm = example_functional()
    back = io.decode_minimal(json.loads(io.dumps(io.encode_minimal(Fm))))
    assert np.array_equal(back.F_YZ, Fm.F_YZ) and np.array_equal(back.F_C, Fm.F_C)


def test_floats_keep_full_precision(tmp_path):
    x = 0.1 + 1 / 3 * 1e-7
    m = np.array([[x, np.pi], [np.pi, np.e]])
    path = tmp_path / "m.json"
    io.write_json(io.encode_matrix(m), path)
    assert np.array_equal(io.decode_matrix(io.read_json(path)).real, m)
    assert "3.141592653589793" in path.read_text()


def test_decoder_reports_missing_blocks():
    d = io.encode_assemblage(prbox_product(np.eye(2) / 2))
    del d["blocks"]["1,1,1,1"]
    with pytest.raises(ValueError, match="missing"):
        io.decode_assemblage(d)


# ---------------------------------------------------------------- CLI

def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_cli_validate_and_evaluate(capsys, tmp_path):
    code, _ = run(capsys, "validate", "fixture:assemblage", "--tolerance", "1e-3")
    assert code == EXIT_OK
    # rebuilt from outcome-0 data, so the no-signalling identities hold to rounding
    code, out = run(capsys, "validate", "fixture:assemblage", "--json")
    assert code == EXIT_OK and json.loads(out)["passed"]
    code, out = run(capsys, "evaluate", "fixture:assemblage", "fixture:functional", "--json")
    assert code == EXIT_OK
    assert json.loads(out)["beta"] == pytest.approx(-0.520495, abs=5e-3)


def test_cli_bipartite_validate_and_ghjw(capsys, tmp_path, rng):
    path = tmp_path / "bi.json"
    io.write_json(io.encode_bipartite(random_bipartite(rng, 2, 3)), path)
    assert run(capsys, "validate", str(path))[0] == EXIT_OK
    code, out = run(capsys, "ghjw", str(path), "--json")
    assert code == EXIT_OK
    assert json.loads(out)["reconstruction_error"] <= 1e-8


def test_cli_aq_and_local(capsys, tmp_path):
    code, out = run(capsys, "aq", "bound", "fixture:functional", "--json")
    assert code == EXIT_OK and json.loads(out)["beta_aq"] == pytest.approx(-0.508417, abs=1e-3)
    assert run(capsys, "aq", "member", "fixture:assemblage", "--tolerance", "1e-3")[0] == EXIT_NEGATIVE
    path = tmp_path / "pr.json"
    io.write_json(io.encode_assemblage(prbox_product(np.eye(2) / 2)), path)
    assert run(capsys, "local", str(path))[0] == EXIT_NEGATIVE
    code, out = run(capsys, "local", str(path), "--mu", "0.99", "--json")
    assert code == EXIT_NEGATIVE and "covering" in json.loads(out)["reason"]


def test_cli_input_errors(capsys, tmp_path):
    assert run(capsys, "validate", str(tmp_path / "missing.json"))[0] == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "evaluate", str(bad), "fixture:functional")[0] == EXIT_INPUT
    odd = tmp_path / "odd.json"
    odd.write_text(json.dumps({"scenario": {"dimA": 2}}))
    assert run(capsys, "aq", "member", str(odd))[0] == EXIT_INPUT


def test_cli_search_and_verify(capsys, tmp_path):
    out = tmp_path / "result.json"
    code, _ = run(capsys, "search", "--restarts", "0", "--initial", "fixture:functional", "--out", str(out))
    assert code == EXIT_OK
    code, text = run(capsys, "verify", str(out), "--json")
    assert code == EXIT_OK
    assert all(json.loads(text).values())


def test_cli_reproduce_is_deterministic(capsys):
    code1, out1 = run(capsys, "reproduce-paper", "--json")
    code2, out2 = run(capsys, "reproduce-paper", "--json")
    assert out1 == out2 and code1 == code2
    names = [s["name"] for s in json.loads(out1)["stages"]]
    assert len(names) == 7


def test_corrupted_input_fails_only_validation():
    d = example_assemblage_json()
    d["minimal"]["sigma_00"][0][0] = [[-0.01, 0.0], [0.0, 0.01]]
    with pytest.warns(UserWarning, match="eigenvalue"):
        report = reproduce_paper(assemblage_json=d)
    stages = {s.name: s for s in report.stages}
    assert len(stages) == 7
    assert not stages["no-signalling validation"].passed
    assert "positivity" in stages["no-signalling validation"].note
    # stages that do not depend on the corrupted block still pass
    assert stages["qutrit lift and filter round trip"].passed
    assert stages["almost-quantum bound"].passed


# ---------------------------------------------------------------- plotting

def test_bloch_components():
    r, p = bloch_xz(np.array([[0.25, 0.25], [0.25, 0.25]]))
    assert p == pytest.approx(0.5) and np.allclose(r, [1, 0])
    r, p = bloch_xz(np.zeros((2, 2)))
    assert p == 0 and np.allclose(r, 0)


def test_bloch_svg_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert run(capsys, "bloch", "fixture:assemblage", str(a))[0] == EXIT_OK
    write_bloch_svg(io.decode_assemblage(example_assemblage_json()), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().lstrip().startswith("<?xml")


def test_bloch_rejects_complex_assemblages(rng):
    with pytest.raises(ValueError, match="real qubit"):
        write_bloch_svg(random_quantum_assemblage(rng, Scenario(2)), "unused.svg")
