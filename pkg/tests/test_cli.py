import csv
import json

import numpy as np
import pytest

from dircomp import __version__
from dircomp.cli import corpus, corpus_fixtures, main, read_binary_matrix
from dircomp.core import HARDY, bergman
from dircomp.counting import restricted_counting
from dircomp.operator import assemble_matrix, singular_values
from dircomp.symbols import G0, load_symbol

QUICK = ["--cert-samples", "20001", "--cert-horizon", "200"]


def run(args, capsys=None):
    code = main(args)
    out = capsys.readouterr() if capsys is not None else None
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# dircomp ")
    return lines[0], list(csv.DictReader(lines[1:]))


# ------------------------------------------------------------------ corpus


def test_corpus_contents(corpus_symbols, declared_classes):
    assert len(corpus()) >= 5
    for name, phi in corpus_symbols.items():
        assert phi.certified, name
        assert phi.class_tag == declared_classes[name]
    assert corpus_symbols["g0_two_prime"].class_tag == G0
    assert corpus_symbols["two_s"].c0 == 2


def test_corpus_fixtures_regression(corpus_symbols):
    fx = corpus_fixtures()
    assert set(fx) == set(corpus_symbols)
    for name, phi in corpus_symbols.items():
        f = fx[name]
        assert f["certification"] == phi.certification.verdict
        for sr, si, pr, pi in f["phi"]:
            assert abs(phi(complex(sr, si)) - complex(pr, pi)) < 1e-12
        sv = singular_values(assemble_matrix(phi, 16, HARDY))[:5]
        assert np.allclose(sv, f["singular_values_hardy_N16"], rtol=1e-10, atol=1e-14)
        sv = singular_values(assemble_matrix(phi, 16, bergman(0.0)))[:5]
        assert np.allclose(sv, f["singular_values_bergman0_N16"], rtol=1e-10, atol=1e-14)
        for wr, wi, val in f.get("restricted", []):
            assert restricted_counting(phi, complex(wr, wi)).value == pytest.approx(val, abs=1e-10)


# ------------------------------------------------------------------ commands


def test_certify_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"c0": 1, "psi": {"2": [1.0, 0.0]}}))
    code, out = run(["certify", str(bad), *QUICK], capsys)
    assert code == 2
    assert json.loads(out.out)["certification"]["verdict"] == "failed"
    assert "failed" in out.err
    code, out = run(["certify", "corpus:g0_two_prime", *QUICK], capsys)
    assert code == 0 and json.loads(out.out)["class"] == "G0"
    # the other commands refuse uncertified symbols with the same code
    code, out = run(["singvals", str(bad), *QUICK, "-N", "4"], capsys)
    assert code == 2 and out.out == ""


def test_override_is_accepted(tmp_path, capsys):
    p = tmp_path / "forced.json"
    p.write_text(json.dumps({"c0": 1, "psi": {"2": [1.0, 0.0]}, "assume_class": True}))
    code, out = run(["singvals", str(p), "-N", "4"], capsys)
    assert code == 0 and "assumed" in out.err


def test_count_matches_library(tmp_path):
    out = tmp_path / "c.csv"
    code, _ = run(["count", "corpus:s_plus_1_minus_2s", "--kind", "restricted", "--sigma-range", "0.05", "0.5", "10",
                   "--t-range", "-3", "3", "10", "-o", str(out), "--workers", "2", *QUICK])
    assert code == 0
    head, rows = read_csv(out)
    assert "seed=0" in head and f"dircomp {__version__}" in head and "config_hash=" in head
    assert len(rows) == 100
    assert list(rows[0]) == ["w_re", "w_im", "value", "kind", "diagnostics"]
    phi = load_symbol(corpus()[[p.stem for p in corpus()].index("s_plus_1_minus_2s")])
    for r in rows[::7]:
        w = complex(float(r["w_re"]), float(r["w_im"]))
        assert float(r["value"]) == restricted_counting(phi, w).value
        assert r["kind"] == "restricted"


def test_count_kinds(tmp_path):
    base = ["count", "corpus:two_s", "--sigma", "0.5", "--t", "0", "1", *QUICK]
    for extra, expect in ((["--kind", "full"], [0.25, 0.25]), (["--kind", "weighted", "--alpha", "0"], [0.0625, 0.0625]),
                          (["--kind", "mean", "--alpha", "0", "--sigma0", "0.1", "--T", "2"], [0.0625 / 2] * 2)):
        out = tmp_path / "k.csv"
        assert main([*base, *extra, "-o", str(out)]) == 0
        _, rows = read_csv(out)
        assert [float(r["value"]) for r in rows] == pytest.approx(expect, abs=1e-12)
    assert main([*base, "--kind", "mean"]) == 1


def test_deterministic_outputs(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    args = ["count", "corpus:two_prime", "--kind", "full", "--sigma-range", "0.05", "0.4", "4", "--t-range", "-4", "4", "4",
            "--t-trunc", "8", *QUICK]
    assert main([*args, "-o", str(a), "--workers", "1"]) == 0
    assert main([*args, "-o", str(b), "--workers", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert main([*args, "-o", str(c), "--seed", "9"]) == 0
    assert a.read_bytes() != c.read_bytes() and "seed=9" in c.read_text().splitlines()[0]
    j1, j2 = tmp_path / "1.json", tmp_path / "2.json"
    for p in (j1, j2):
        assert main(["lp-verify", "--f", '{"2": [1, 0], "3": [0, 0.5]}', "--seed", "4", "-o", str(p)]) == 0
    assert j1.read_bytes() == j2.read_bytes()


def test_lp_verify(tmp_path, capsys):
    code, out = run(["lp-verify", "--f", '{"2": [1, 0]}', "--space", "bergman(0)", "--seed", "3"], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert set(doc) >= {"meta", "closed", "mc", "error_estimate", "gap"}
    assert doc["meta"]["seed"] == 3 and doc["meta"]["version"] == __version__
    assert doc["closed"] == pytest.approx(0.5 / np.log(2))
    assert doc["gap"] <= 3 * doc["error_estimate"]
    f = tmp_path / "f.json"
    f.write_text('{"2": [1, 0], "6": [0.5, 0]}')
    assert main(["lp-verify", "--f", str(f), "--measure", "uniform_window:0,4", "-o", str(tmp_path / "o.json")]) == 0
    assert main(["lp-verify", "--f", "nope"]) == 1
    assert main(["lp-verify", "--f", '{"2": 1}', "--measure", "gaussian"]) == 1


def test_cov_check(capsys):
    code, out = run(["cov-check", "corpus:two_s", "--f", '{"1": [1, 0]}', *QUICK], capsys)
    assert code == 0
    rep = json.loads(out.out)["report"]
    assert rep["lhs"] == 0 and rep["rhs"] == 0


def test_matrix_formats(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["matrix", "corpus:two_s", "-N", "3", "-o", str(out), *QUICK]) == 0
    _, rows = read_csv(out)
    assert [(int(r["row"]), int(r["col"]), float(r["re"])) for r in rows] == [(1, 1, 1.0), (4, 2, 1.0), (9, 3, 1.0)]
    b = tmp_path / "m.bin"
    assert main(["matrix", "corpus:s_plus_1_minus_2s", "-N", "8", "--format", "binary", "-o", str(b), *QUICK]) == 0
    raw = b.read_bytes()
    assert raw[:4] == b"DCMX" and len(raw) >= 16
    rows_idx, A = read_binary_matrix(b)
    ref = assemble_matrix(load_symbol(corpus()[[p.stem for p in corpus()].index("s_plus_1_minus_2s")]), 8)
    assert rows_idx.tolist() == [int(m) for m in ref.rows]
    assert np.array_equal(A, ref.entries)
    meta = json.loads((tmp_path / "m.bin.meta.json").read_text())
    assert meta["seed"] == 0 and meta["rows"] == A.shape[0] and meta["columns"] == 8
    assert main(["matrix", "corpus:two_s", "--format", "binary", *QUICK]) == 1  # needs --output
    j = tmp_path / "m.json"
    assert main(["matrix", "corpus:s_plus_1", "-N", "4", "--format", "json", "-o", str(j), *QUICK]) == 0
    doc = json.loads(j.read_text())
    assert np.allclose(np.array(doc["re"]), np.diag([1, 1 / 2, 1 / 3, 1 / 4]))


def test_singvals_and_tail_error(tmp_path, capsys):
    code, out = run(["singvals", "corpus:s_plus_1", "-N", "5", *QUICK], capsys)
    assert code == 0
    vals = [float(line.split(",")[1]) for line in out.out.splitlines()[2:]]
    assert vals == pytest.approx([1, 1 / 2, 1 / 3, 1 / 4, 1 / 5], abs=1e-15)
    # the tail rule cannot be met within 50 rows
    code, out = run(["singvals", "corpus:g0_two_prime", "-N", "16", "--row-cap", "50", *QUICK], capsys)
    assert code == 3 and "numeric" in out.err


def test_report_two_s(capsys):
    code, out = run(["report", "corpus:two_s", "--Ns", "16", "32", "--ks", "2", "4", "--spaces", "hardy", *QUICK], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert doc["conclusion"]["hardy"] == "noncompact-consistent"
    assert doc["meta"]["command"] == "report"


def test_eval_and_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 11\ncert-samples = 20001\ncert_horizon = 200.0\n[eval]\nsigma = [0.0, 1.0]\nt = [0.0]\n')
    out = tmp_path / "e.csv"
    assert main(["eval", "corpus:s_plus_1_minus_2s", "--config", str(cfg), "-o", str(out)]) == 0
    head, rows = read_csv(out)
    assert "seed=11" in head
    assert [(float(r["s_re"]), float(r["phi_re"])) for r in rows] == [(0.0, 0.0), (1.0, 1.5)]
    # command line wins over the config file
    assert main(["eval", "corpus:s_plus_1_minus_2s", "--config", str(cfg), "--sigma", "2", "-o", str(out)]) == 0
    _, rows = read_csv(out)
    assert len(rows) == 1 and float(rows[0]["phi_re"]) == pytest.approx(2.75)
    bad = tmp_path / "bad.toml"
    bad.write_text("colour = 3\n")
    assert main(["eval", "corpus:two_s", "--config", str(bad), "--sigma", "1", "--t", "0"]) == 1


def test_input_validation(tmp_path, capsys):
    assert main(["eval", "missing.json", "--sigma", "1", "--t", "0"]) == 1
    assert main(["eval", "corpus:unknown", "--sigma", "1", "--t", "0"]) == 1
    assert main(["eval", "corpus:two_s", "--sigma", "1", "--t", "0", "-o", str(tmp_path / "no" / "x.csv")]) == 1
    assert main(["eval", "corpus:two_s", "--sigma", "1", *QUICK]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["count", "corpus:two_s", "--sigma", "-1", "--t", "0", *QUICK]) == 1


def test_bounds(capsys):
    code, out = run(["bounds", "corpus:two_s", "--sigma", "0.5", "1.0", "--t", "0", "1.5", "3", "--chars", "1", "2",
                     *QUICK], capsys)
    assert code == 0
    doc = json.loads(out.out)
    assert [e["constant"] for e in doc["estimates"]] == pytest.approx([0.5 * (1 + 1.5**2)] * 2)


def test_workers_env(monkeypatch):
    from dircomp.cli import InputError, default_workers

    monkeypatch.setenv("DIRCOMP_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("DIRCOMP_WORKERS", "x")
    with pytest.raises(InputError):
        default_workers()


def test_help_documents_every_command(capsys):
    assert main(["--help"]) == 0
    text = capsys.readouterr().out
    for cmd in ("eval", "certify", "count", "bounds", "lp-verify", "cov-check", "matrix", "singvals", "report"):
        assert cmd in text
