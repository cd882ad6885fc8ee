import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import compose_via_columns, hardy_norm_on_torus
from dircomp.core import HARDY, Character, DirichletPolynomial, bergman, character_power, twist
from dircomp.operator import (
    ReportParams,
    TailNotNegligible,
    _adaptive_column,
    assemble_matrix,
    compactness_report,
    compose_basis_column,
    re_ratio_criterion,
    singular_value_verdict,
    singular_values,
)
from dircomp.symbols import make_symbol, twist_symbol

FAST = dict(samples=20001, t_range=200.0)


@pytest.fixture(scope="module")
def syms():
    return {
        "2s": make_symbol(2, {}, **FAST),
        "s+1": make_symbol(1, {1: 1}, **FAST),
        "one_prime": make_symbol(1, {1: 1, 2: -1}, **FAST),
        "two_prime": make_symbol(1, {1: 2, 2: -1, 3: -1}, **FAST),
        "g0_two_prime": make_symbol(0, {1: 2.5, 2: -1, 3: -1}, **FAST),
    }


def test_column_examples(syms):
    for n in (1, 2, 7, 12):
        assert compose_basis_column(syms["s+1"], n, 100) == DirichletPolynomial({n: 1 / n})
        assert compose_basis_column(syms["2s"], n, 200) == DirichletPolynomial({n * n: 1})
    with pytest.raises(ValueError):
        compose_basis_column(syms["2s"], 5, 20)
    with pytest.raises(ValueError):
        compose_basis_column(syms["2s"], 0, 20)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_single_prime_column_taylor_oracle(syms, n):
    """n^{-phi(s)} = n^{-1} n^{-s} exp(log n * 2^{-s}): coefficient (log n)^j / (n j!) at n 2^j."""
    col = compose_basis_column(syms["one_prime"], n, n * 2**40)
    assert set(col.indices.tolist()) == {n * 2**j for j in range(41)}
    for j in range(41):
        assert abs(col[n * 2**j] - math.log(n) ** j / (n * math.factorial(j))) < 1e-12


def test_diagonal_and_partial_isometry(syms):
    mx = assemble_matrix(syms["s+1"], 4)
    assert np.array_equal(mx.dense(4), np.diag([1, 1 / 2, 1 / 3, 1 / 4]).astype(complex))
    mx = assemble_matrix(syms["s+1"], 4, bergman(1.3))
    assert np.allclose(mx.dense(4), np.diag([1, 1 / 2, 1 / 3, 1 / 4]), atol=1e-15, rtol=0)
    mx = assemble_matrix(syms["2s"], 3)
    A = mx.dense()
    assert A.shape == (9, 3)
    E = np.zeros((9, 3))
    E[0, 0] = E[3, 1] = E[8, 2] = 1
    assert np.array_equal(A, E)
    assert np.array_equal(singular_values(mx), np.ones(3))


def test_imaginary_constant_ground_truth():
    phi = make_symbol(2, {1: 0.3j}, **FAST)
    assert phi.certification.method == "imaginary-constant"
    mx = assemble_matrix(phi, 10)
    A = mx.dense()
    for n in range(1, 11):
        col = np.zeros(A.shape[0], dtype=complex)
        col[n * n - 1] = n ** (-0.3j)
        assert np.array_equal(A[:, n - 1], col)


def test_singular_values_examples(syms):
    assert np.allclose(singular_values(np.diag([1, 1 / 2, 1 / 3])), [1, 1 / 2, 1 / 3], rtol=0, atol=1e-15)
    assert np.allclose(singular_values(assemble_matrix(syms["2s"], 40)), 1.0, rtol=0, atol=1e-15)


@pytest.mark.parametrize("key", ["one_prime", "two_prime", "g0_two_prime"])
def test_gram_matrix_oracle(syms, key):
    A = assemble_matrix(syms[key], 24).entries
    _check_against_gram(A)


def _check_against_gram(A):
    # the Gram route squares the conditioning: values below sqrt(eps) s_1 are not recoverable from it
    sv = singular_values(A)
    ev = np.sort(np.linalg.eigvalsh(A.conj().T @ A))[::-1]
    assert np.allclose(sv**2, ev, rtol=0, atol=1e-12 * sv[0] ** 2)
    big = sv > 1e-4 * sv[0]
    assert np.allclose(sv[big], np.sqrt(ev[big]), rtol=0, atol=1e-9)


@given(st.floats(-1, 1), st.floats(0.0, 0.4), st.floats(0.0, 0.4))
@settings(max_examples=10)
def test_gram_oracle_random_symbols(a1, b, c):
    phi = make_symbol(1, {1: 0.9 + a1 * 1j, 2: -b, 3: c * 1j}, **FAST)
    _check_against_gram(assemble_matrix(phi, 16).entries)


@pytest.mark.parametrize("alpha", [0.0, 0.7, -0.5])
def test_bergman_is_conjugated_hardy(syms, alpha):
    for key in ("one_prime", "g0_two_prime"):
        h = assemble_matrix(syms[key], 20, HARDY)
        b = assemble_matrix(syms[key], 20, bergman(alpha))
        assert np.array_equal(b.rows, h.rows)
        rows = np.array([int(m) for m in b.rows], dtype=float)
        wr = (1 + np.log(rows)) ** (-(1 + alpha) / 2)
        wc = (1 + np.log(np.arange(1, 21.0))) ** ((1 + alpha) / 2)
        assert np.allclose(b.entries, wr[:, None] * h.entries * wc[None, :], rtol=0, atol=1e-12)


@given(st.floats(-20, 20))
@settings(max_examples=8)
def test_twist_invariance_of_singular_values(syms, tau):
    phi = syms["one_prime"]
    chi = Character.vertical(tau, [2])
    a = singular_values(assemble_matrix(phi, 32))
    b = singular_values(assemble_matrix(twist_symbol(phi, chi), 32))
    assert np.allclose(a, b, rtol=0, atol=1e-6)


@pytest.mark.parametrize("n", [2, 6, 30])
def test_column_norm_matches_torus_integral(syms, n):
    """||n^{-phi}||^2 = mean over the torus of exp(-2 log n Re psi(z)) for the G0 symbol."""
    col, tail, _ = _adaptive_column(syms["g0_two_prime"], n, HARDY, 1e-10, 10**6)
    norm = float(np.sum(np.abs(col.values) ** 2))
    ref = hardy_norm_on_torus(lambda z2, z3: n ** -(2.5 - z2 - z3), [2, 3], n=256)
    assert norm == pytest.approx(ref, rel=1e-9)
    assert tail <= 1e-10 * norm


def test_column_tail_rule_and_cap(syms):
    mx = assemble_matrix(syms["g0_two_prime"], 16)
    norms = np.sum(np.abs(mx.entries) ** 2, axis=0)
    assert np.all(mx.column_tail <= 1e-10 * norms + 1e-300)
    with pytest.raises(TailNotNegligible):
        assemble_matrix(syms["g0_two_prime"], 16, cap=50)


def test_norm_bound_on_hardy(syms):
    for key in ("2s", "s+1", "one_prime", "two_prime"):
        assert singular_values(assemble_matrix(syms[key], 64))[0] <= 1 + 1e-6


@settings(max_examples=15)
@given(st.integers(0, 2), st.floats(-3, 3), st.floats(-3, 3), st.floats(2.0, 4.0), st.floats(-10, 10),
       st.floats(0, 0.3), st.floats(0, 0.3))
def test_twist_identity(c0, a2, a3, sig, t, b2, b3):
    """(f o phi)_chi = f_{chi^c0} o phi_chi at Re s >= 2."""
    psi = {1: 1.0 + (0.6 if c0 == 0 else 0.0), 2: -b2, 3: b3 * 1j}
    phi = make_symbol(c0, psi, **FAST)
    chi = Character.from_angles({2: a2, 3: a3, 5: a2 - a3})
    f = DirichletPolynomial({2: 1, 3: -0.5, 5: 0.25j})
    s = complex(sig, t)
    lhs = twist(compose_via_columns(f, phi, 10**5), chi)(s)
    rhs = twist(f, character_power(chi, c0))(twist_symbol(phi, chi)(s))
    assert abs(lhs - rhs) < 1e-8


def test_re_ratio_criterion(syms):
    p = ReportParams()
    assert re_ratio_criterion(syms["s+1"], p.ratio_sigmas, p.ratio_t)["verdict"] == "to-infinity-consistent"
    assert re_ratio_criterion(syms["2s"], p.ratio_sigmas, p.ratio_t)["verdict"] == "failed"
    g0 = re_ratio_criterion(syms["g0_two_prime"], p.ratio_sigmas, p.ratio_t)
    assert g0["verdict"] == "failed" and g0["form"].startswith("(Re phi - 1/2)")


def test_singular_value_verdict_rules():
    p = ReportParams(Ns=(1, 2))
    assert singular_value_verdict({5: [1.0, 1.0]}, [1.0, 1.0], p)[0] == "noncompact-consistent"
    assert singular_value_verdict({5: [0.05, 0.05]}, [1.0, 1.0], p)[0] == "compact-consistent"
    assert singular_value_verdict({5: [0.3, 0.6]}, [1.0, 1.0], p)[0] == "inconclusive"
    assert singular_value_verdict({5: [0.3, 0.3]}, [1.0, 1.0], p)[0] == "inconclusive"


def test_small_reports(syms):
    small = ReportParams(spaces=(HARDY,), Ns=(16, 32), ks=(2, 4), ratio_sigmas=(0.5, 0.25, 0.125, 0.0625),
                         littleo_sigmas=(0.25, 0.125, 0.0625, 0.03125), littleo_t=(0.0, 1.0))
    rep = compactness_report(syms["2s"], small)
    assert rep.conclusion == {"hardy": "noncompact-consistent"}
    assert rep.criterion_little_o.verdict == "violated"
    diag = ReportParams(spaces=(HARDY, bergman(0)), Ns=(32, 64), ks=(12, 16),
                        littleo_sigmas=(0.25, 0.125, 0.0625, 0.03125), littleo_t=(0.0, 1.0))
    rep = compactness_report(syms["s+1"], diag)
    assert rep.conclusion == {"hardy": "compact-consistent", "bergman(0)": "compact-consistent"}
    obj = rep.to_json_obj()
    assert obj["singular_values"]["hardy"]["64"][0] == 1.0
    assert obj["tail_indicator"]["hardy"]["s_k"]["12"] == pytest.approx([1 / 12, 1 / 12])
