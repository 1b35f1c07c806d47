import json
from pathlib import Path

import numpy as np
import pytest

from ehtsvf.cli import DEFAULT_SEED, main

ROOT = Path(__file__).resolve().parent.parent
SPECS = ROOT / "specs"
GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_tau_ghz_table(capsys):
    code, out, _ = run(capsys, "run-protocol", "tau-ghz")
    assert code == 0
    assert "(0.7071) [z+]⊙[z+]⊙[z+] + (-0.7071) [z-]⊙[z-]⊙[z-]" in out
    assert "history s-norm: 1" in out


def test_inner_s_matches_isomap_and_mts_inner(capsys):
    code, out, _ = run(capsys, "--format", "canonical", "inner", "--kind", "s", SPECS / "shared_basis.ehs")
    assert code == 0
    # first history pair in the file mirrors the first MTS pair
    s_val = json.loads(out)["value"]
    code, out, _ = run(capsys, "--format", "canonical", "inner", "--kind", "mts", SPECS / "shared_basis.ehs")
    m_val = json.loads(out)["value"]
    assert abs(complex(*s_val) - complex(*m_val)) < 1e-12
    code, out, _ = run(capsys, "--format", "canonical", "isomap", "--dir", "mts2eh", SPECS / "shared_basis.ehs")
    assert code == 0 and len(json.loads(out)) == 2


def test_abl_exit_codes(capsys):
    code, out, _ = run(capsys, "abl", SPECS / "abl.ehs")
    assert code == 0 and "outcome 0: 1" in out
    code, out, err = run(capsys, "abl", SPECS / "abl_impossible.ehs")
    assert code == 2 and out == "" and "unreachable" in err


def test_diagnostics_exit_one(capsys):
    code, out, err = run(capsys, "weight", SPECS / "invalid" / "malformed.ehs")
    assert code == 1 and out == ""
    assert "2:13: unclosed '['" in err


def test_usage_errors_exit_one(capsys):
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "inner", "--kind", "q", SPECS / "hadamard.ehs")[0] == 1
    assert run(capsys, "weight", SPECS / "missing.ehs")[0] == 1
    assert run(capsys, "ptrace", SPECS / "minimal.ehs")[0] == 1
    assert run(capsys, "verify-iso", "--samples", "0")[0] == 1


def test_weight_and_check_family(capsys):
    code, out, _ = run(capsys, "weight", SPECS / "minimal.ehs")
    assert code == 0 and out == "weight h: 0.5\n"
    code, out, _ = run(capsys, "check-family", SPECS / "family.ehs")
    assert code == 0 and out.count("not consistent") == 1


def test_ptrace(capsys):
    code, out, _ = run(capsys, "--format", "canonical", "ptrace", SPECS / "generation.ehs")
    data = json.loads(out)
    assert code == 0 and [len(d["components"]) for d in data] == [2, 4]


def test_seed_printed_and_deterministic(capsys):
    a = run(capsys, "run-protocol", "generation")
    b = run(capsys, "run-protocol", "generation", "--seed", str(DEFAULT_SEED))
    assert a == b and f"seed: {DEFAULT_SEED}" in a[1]
    c = run(capsys, "verify-iso", "--samples", "5", "--seed", "3")
    d = run(capsys, "--seed", "3", "verify-iso", "--samples", "5")
    assert c == d


def test_output_file(capsys, tmp_path):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "--format", "canonical", "--output", target, "weight", SPECS / "minimal.ehs")
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["kind"] == "weight"


@pytest.mark.parametrize("name", ["abl", "family", "generation", "hadamard", "minimal", "tau_ghz",
                                  "shared_basis", "two_branch"])
def test_outputs_match_golden(capsys, name):
    code, out, _ = run(capsys, "--format", "canonical", "run", SPECS / f"{name}.ehs")
    assert code == 0
    golden = json.loads((GOLDEN / f"{name}.json").read_text())
    assert np.allclose(np.array(_numbers(json.loads(out))), np.array(_numbers(golden)), atol=1e-12)


def _numbers(obj):
    if isinstance(obj, dict):
        return [x for k in sorted(obj) for x in _numbers(obj[k])]
    if isinstance(obj, list):
        return [x for v in obj for x in _numbers(v)]
    if isinstance(obj, bool) or isinstance(obj, str):
        return []
    return [float(obj)]
