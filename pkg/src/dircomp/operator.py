"""Truncated matrices of composition operators and singular-value diagnostics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import HARDY, DirichletPolynomial, Space, bergman, exponentiate
from .counting import LittleOReport, verify_criterion_littleo
from .symbols import Symbol, real_ratio

log = logging.getLogger(__name__)

TAIL_REL = 1e-10
ROW_CAP = 10**6


class TailNotNegligible(RuntimeError):
    """A column could not be truncated with negligible discarded mass."""

    def __init__(self, msg, column=None):
        super().__init__(msg)
        self.column = column


def compose_basis_column(phi: Symbol, n: int, M: int, max_terms: int | None = ROW_CAP) -> DirichletPolynomial:
    """Coefficients (index <= M) of ``n^{-phi(s)} = n^{-c0 s} exp(-log n * psi(s))``."""
    if n < 1:
        raise ValueError("basis index must be >= 1")
    if n == 1:
        return DirichletPolynomial({1: 1.0})
    base = n**phi.c0
    if M < base:
        raise ValueError(f"row cutoff {M} cannot hold index {base}")
    # the constant term is applied as an exact power so that n^{-1} is correctly rounded
    a1 = phi.psi[1]
    lead = float(n) ** (-a1.real) if a1.imag == 0 else n ** (-a1)
    inner = exponentiate(phi.psi.without_constant().scale(-math.log(n)), M // base, max_terms)
    return DirichletPolynomial({base * k: lead * c for k, c in inner})


def _adaptive_column(phi: Symbol, n: int, space: Space, rel: float, cap: int):
    """Grow the index bound until the last octave carries <= rel of the column mass.

    The stopping rule uses the unweighted mass.  Bergman weights decrease in
    the index, so this also bounds the weighted tail, and every space shares
    the same truncation.  The returned tail is weighted for ``space``.
    """
    base = n**phi.c0 if n > 1 else 1
    if n == 1 or phi.psi.without_constant().is_zero:
        col = compose_basis_column(phi, n, base)
        return col, 0.0, base
    K = 16
    while True:
        try:
            col = compose_basis_column(phi, n, base * K, max_terms=cap)
        except OverflowError as err:
            raise TailNotNegligible(f"column {n}: {err}", column=n) from None
        idx = col.indices
        mass = np.abs(col.values) ** 2
        in_tail = idx > base * K / 2
        total = float(mass.sum())
        if total == 0 or float(mass[in_tail].sum()) <= rel * total:
            return col, float((mass * space.weight(idx))[in_tail].sum()), base * K
        K *= 4


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense matrix of C_phi on columns 1..N; rows are the indices that occur."""

    N: int
    space: Space
    rows: np.ndarray  # sorted basis indices (python ints, object dtype)
    entries: np.ndarray  # (len(rows), N) complex, orthonormal basis of the space
    column_tail: np.ndarray
    M: int  # largest index inspected by the truncation rule

    @property
    def shape(self):
        return self.entries.shape

    def dense(self, M: int | None = None) -> np.ndarray:
        """Matrix on rows 1..M (default: largest occurring row)."""
        M = int(M or max(int(self.rows[-1]), self.N))
        out = np.zeros((M, self.N), dtype=complex)
        for i, m in enumerate(self.rows):
            if m <= M:
                out[int(m) - 1] = self.entries[i]
        return out


def assemble_matrix(phi: Symbol, N: int, space: Space = HARDY, rel: float = TAIL_REL,
                    cap: int = ROW_CAP) -> OperatorMatrix:
    """Truncated matrix of C_phi in the orthonormal basis ``(1+log k)^{(1+alpha)/2} k^{-s}``.

    entry(m, n) = c_m^{(n)} * w_n / w_m with w_k the basis normalization.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if phi.certification is not None and not phi.certified:
        log.warning("assembling matrix for uncertified symbol %r", phi)
    cols, tails, Mmax = [], [], 1
    for n in range(1, N + 1):
        col, tail, M = _adaptive_column(phi, n, space, rel, cap)
        cols.append(col)
        tails.append(tail)
        Mmax = max(Mmax, M)
    rows = sorted(set().union(*(c.coeffs.keys() for c in cols)))
    if len(rows) > cap:
        raise TailNotNegligible(f"{len(rows)} rows exceed cap {cap}")
    where = {m: i for i, m in enumerate(rows)}
    A = np.zeros((len(rows), N), dtype=complex)
    wrow = np.sqrt(space.weight(np.array(rows, dtype=float)))
    wcol = 1.0 / np.sqrt(space.weight(np.arange(1, N + 1, dtype=float)))
    for j, col in enumerate(cols):
        for m, c in col:
            A[where[m], j] = c
    A *= wrow[:, None] * wcol[None, :]
    return OperatorMatrix(N, space, np.array(rows, dtype=object), A, np.array(tails), Mmax)


def singular_values(mx: OperatorMatrix | np.ndarray) -> np.ndarray:
    A = mx.entries if isinstance(mx, OperatorMatrix) else np.asarray(mx)
    return np.linalg.svd(A, compute_uv=False)


# ------------------------------------------------------------------- report


@dataclass(frozen=True)
class ReportParams:
    spaces: tuple[Space, ...] = (HARDY,)
    Ns: tuple[int, ...] = (64, 128, 256, 512)
    ks: tuple[int, ...] = (5, 10, 20)
    ratio_sigmas: tuple[float, ...] = tuple(2.0 ** -k for k in range(3, 13))
    ratio_t: tuple[float, ...] = tuple(np.linspace(-50, 50, 2001))
    littleo_sigmas: tuple[float, ...] = tuple(2.0 ** -k for k in range(3, 11))
    littleo_t: tuple[float, ...] = tuple(np.linspace(-8, 8, 33))
    littleo_ttrunc: float = 16.0
    stable_rel: float = 0.05
    compact_below: float = 0.1
    noncompact_above: float = 0.5


@dataclass
class CompactnessReport:
    symbol: Symbol
    criterion_little_o: LittleOReport | None
    criterion_re_ratio: dict
    singular_values: dict = field(default_factory=dict)  # space -> {N: first kmax values}
    tail_indicator: dict = field(default_factory=dict)  # space -> {k: [s_k(N) for N]}
    conclusion: dict = field(default_factory=dict)  # space -> verdict
    flags: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "symbol": self.symbol.to_json_obj(),
            "class": self.symbol.class_tag,
            "criterion_little_o": None if self.criterion_little_o is None else self.criterion_little_o.to_json_obj(),
            "criterion_re_ratio": self.criterion_re_ratio,
            "singular_values": self.singular_values,
            "tail_indicator": self.tail_indicator,
            "conclusion": self.conclusion,
            "flags": self.flags,
        }


def re_ratio_criterion(phi: Symbol, sigmas, t_values) -> dict:
    """Min over Re s = sigma of Re phi(s)/Re s (or (Re phi - 1/2)/Re s for G0)."""
    t = np.asarray(t_values, dtype=float)
    mins = [float(np.min(real_ratio(phi, sig + 1j * t))) for sig in sigmas]
    grows = all(mins[i + 2] >= 1.5 * mins[i] for i in range(len(mins) - 2))
    ok = grows and mins[-1] > 1e3
    return {"sigmas": list(map(float, sigmas)), "min_ratio": mins,
            "verdict": "to-infinity-consistent" if ok else "failed",
            "form": "(Re phi - 1/2)/Re s" if phi.c0 == 0 else "Re phi/Re s"}


def singular_value_verdict(table: dict, norms, p: ReportParams) -> tuple[str, dict]:
    """Classify the table k -> [s_k(N) for N in p.Ns].

    A value has stabilized when its change between the two largest N is below
    ``p.stable_rel`` of the operator scale s_1 at the largest N.  The per-k
    relative change is returned as well.
    """
    scale = norms[-1]
    stable, rel_k = {}, {}
    for k, seq in table.items():
        a, b = seq[-2], seq[-1]
        stable[k] = scale > 0 and abs(b - a) / scale < p.stable_rel
        rel_k[k] = abs(b - a) / b if b > 0 else 0.0
    kmax = max(table)
    last = {k: seq[-1] for k, seq in table.items()}
    if all(stable.values()) and last[kmax] < p.compact_below:
        verdict = "compact-consistent"
    elif all(stable.values()) and min(last.values()) > p.noncompact_above:
        verdict = "noncompact-consistent"
    else:
        verdict = "inconclusive"
    return verdict, {"stable": {str(k): bool(v) for k, v in stable.items()},
                     "relative_change_per_k": {str(k): float(v) for k, v in rel_k.items()},
                     "scale_s1": float(scale)}


def compactness_report(phi: Symbol, params: ReportParams | None = None) -> CompactnessReport:
    p = params or ReportParams()
    lo = None
    if phi.c0 >= 1:
        lo = verify_criterion_littleo(phi, p.littleo_sigmas, p.littleo_t, t_trunc=p.littleo_ttrunc)
    ratio = re_ratio_criterion(phi, p.ratio_sigmas, p.ratio_t)
    rep = CompactnessReport(phi, lo, ratio)
    kmax = max(p.ks)
    for space in p.spaces:
        key = str(space)
        svs = {}
        for N in p.Ns:
            sv = singular_values(assemble_matrix(phi, N, space))
            svs[N] = [float(x) for x in np.pad(sv, (0, max(0, kmax - len(sv))))[:kmax]]
        table = {k: [svs[N][k - 1] for N in p.Ns] for k in p.ks}
        verdict, stab = singular_value_verdict(table, [svs[N][0] for N in p.Ns], p)
        rep.singular_values[key] = {str(N): v for N, v in svs.items()}
        rep.tail_indicator[key] = {"s_k": {str(k): v for k, v in table.items()}, **stab}
        rep.conclusion[key] = verdict
        rep.flags.extend(_cross_flags(phi, space, verdict, lo, ratio))
    if phi.c0 >= 1 and len(phi.psi.support()) >= 1 and lo is not None:
        rep.flags.append("open-question evidence: finite-prime symbol; little-o vs compactness "
                         "equivalence is unresolved, data recorded only")
    return rep


def _cross_flags(phi, space, verdict, lo, ratio) -> list[str]:
    flags = []
    key = str(space)
    ratio_ok = ratio["verdict"] == "to-infinity-consistent"
    if not space.is_hardy:
        if verdict == "compact-consistent" and not ratio_ok:
            flags.append(f"{key}: compact despite failed sufficient condition ({ratio['form']} -> inf)")
        if verdict == "noncompact-consistent" and ratio_ok:
            flags.append(f"{key}: DISAGREEMENT: ratio condition holds but singular values do not decay")
    elif lo is not None:
        if lo.verdict == "consistent-with-little-o" and verdict == "noncompact-consistent":
            flags.append(f"{key}: DISAGREEMENT: little-o holds but singular values do not decay")
        if lo.verdict == "violated" and verdict == "compact-consistent":
            flags.append(f"{key}: compact despite failed sufficient condition (little-o)")
    return flags


def default_spaces(phi: Symbol) -> tuple[Space, ...]:
    return (HARDY, bergman(0.0))
