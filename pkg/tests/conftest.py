import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from dircomp.cli import corpus
from dircomp.core import DirichletPolynomial
from dircomp.symbols import load_symbol

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def poly_strategy(max_index=30, max_terms=4, scale=1.0, allow_constant=True):
    lo = 1 if allow_constant else 2
    # tiny magnitudes would only exercise floating-point underflow
    part = st.floats(-scale, scale).map(lambda x: 0.0 if abs(x) < 1e-100 else x)
    coeff = st.tuples(part, part).map(lambda z: complex(*z))
    return st.dictionaries(st.integers(lo, max_index), coeff, min_size=1, max_size=max_terms).map(DirichletPolynomial).filter(lambda f: not f.is_zero)


@pytest.fixture(scope="session")
def corpus_symbols():
    return {p.stem: load_symbol(p) for p in corpus()}


@pytest.fixture(scope="session")
def declared_classes():
    return {p.stem: json.loads(p.read_text())["declared_class"] for p in corpus()}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    """record(k, ok, detail) stores and prints the one-line outcome of criterion k."""

    def _record(k, ok, detail):
        line = f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[k] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
