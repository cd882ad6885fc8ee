"""Symbols ``phi(s) = c0*s + psi(s)`` of the Gordon-Hedenmalm class and their certification."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .core import Character, DirichletPolynomial, derivative, evaluate, twist

log = logging.getLogger(__name__)

G0 = "G0"
GGE1 = "Gge1"
UNBOUNDED = "unbounded"

Verdict = Literal["certified", "failed", "inconclusive"]

# slack used when comparing a bound with the class threshold
CERT_TOL = 1e-12


@dataclass(frozen=True)
class CertificationReport:
    min_real_part: float
    attained_at: complex
    sample_count: int
    lipschitz_bound: float
    t_range: float
    verdict: Verdict
    # lower bound for Re psi on the closed right half-plane from sum |a_n|
    coefficient_bound: float = float("nan")
    threshold: float = 0.0
    margin: float = float("nan")
    method: str = ""
    inherited: bool = False
    overridden: bool = False

    @property
    def zero_margin(self) -> bool:
        return self.verdict == "certified" and abs(self.margin) <= 1e-9

    def to_json_obj(self) -> dict:
        d = dataclasses.asdict(self)
        d["attained_at"] = [self.attained_at.real, self.attained_at.imag]
        d["zero_margin"] = self.zero_margin
        return d


def certify_class(
    c0: int,
    psi: DirichletPolynomial,
    t_range: float = 1e3,
    samples: int = 10**6,
) -> CertificationReport:
    """Check the class condition on ``Re psi`` along the imaginary axis.

    Re psi is a bounded harmonic function on the right half-plane, so its
    infimum there equals the infimum of the boundary values ``Re psi(it)``.
    Two certificates are tried:

    * coefficient bound ``Re a_1 - sum_{n>=2} |a_n|``, valid for all t;
    * sampled minimum on ``[-t_range, t_range]`` minus ``L*h/2`` with
      ``L = sum |a_n| log n`` (finite horizon only).

    A sample below the threshold is a witness and gives ``failed``.
    """
    if c0 < 0:
        raise ValueError("characteristic must be nonnegative")
    if not t_range > 0:
        raise ValueError("t_range must be positive")
    if samples < 2:
        raise ValueError("need at least two samples")
    threshold = 0.5 if c0 == 0 else 0.0

    t = np.linspace(-t_range, t_range, samples)
    if samples % 2 == 0:
        t = np.append(t, 0.0)
    # chunked to bound memory on 10^6-point grids
    mins = []
    for chunk in np.array_split(t, max(1, len(t) // 200_000)):
        re = evaluate(psi, 1j * chunk).real
        k = int(np.argmin(re))
        mins.append((re[k], chunk[k]))
    min_re, t_min = min(mins)
    h = 2 * t_range / (samples - 1)
    lip = psi.abs_sum(log_power=1)
    sampled_lower = min_re - lip * h / 2
    coef_lower = psi[1].real - psi.abs_sum()

    degenerate = c0 >= 1 and set(psi.coeffs) <= {1} and psi[1].real == 0
    if degenerate:
        verdict, margin, method = "certified", 0.0, "imaginary-constant"
    elif min_re < threshold - CERT_TOL:
        verdict, margin, method = "failed", min_re - threshold, "witness"
    elif coef_lower >= threshold - CERT_TOL:
        verdict, margin, method = "certified", coef_lower - threshold, "coefficient-bound"
    elif sampled_lower >= threshold - CERT_TOL:
        verdict, margin, method = "certified", sampled_lower - threshold, "lipschitz-grid"
    else:
        verdict, margin, method = "inconclusive", sampled_lower - threshold, "lipschitz-grid"
    return CertificationReport(
        min_real_part=float(min_re),
        attained_at=complex(0.0, float(t_min)),
        sample_count=len(t),
        lipschitz_bound=lip,
        t_range=float(t_range),
        verdict=verdict,
        coefficient_bound=coef_lower,
        threshold=threshold,
        margin=float(margin),
        method=method,
    )


@dataclass(frozen=True)
class Symbol:
    """``phi(s) = c0*s + psi(s)``; class tag follows from c0."""

    c0: int
    psi: DirichletPolynomial
    certification: CertificationReport | None = None
    name: str = ""

    def __post_init__(self):
        if int(self.c0) != self.c0 or self.c0 < 0:
            raise ValueError(f"characteristic must be a nonnegative integer, got {self.c0}")
        object.__setattr__(self, "c0", int(self.c0))

    @property
    def class_tag(self) -> str:
        return G0 if self.c0 == 0 else GGE1

    @property
    def certified(self) -> bool:
        return self.certification is not None and self.certification.verdict == "certified"

    def __call__(self, s):
        return evaluate_symbol(self, s)

    def derivative(self, s):
        return self.c0 + evaluate(self._dpsi, s)

    @property
    def _dpsi(self) -> DirichletPolynomial:
        cached = self.__dict__.get("_dpsi_cache")
        if cached is None:
            cached = derivative(self.psi)
            object.__setattr__(self, "_dpsi_cache", cached)
        return cached

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Symbol{label}(c0={self.c0}, psi={self.psi!r})"

    def to_json_obj(self) -> dict:
        d = {"c0": self.c0, "psi": self.psi.to_json_obj()}
        if self.name:
            d["name"] = self.name
        return d


def make_symbol(
    c0: int,
    psi: DirichletPolynomial | dict,
    name: str = "",
    certify: bool = True,
    t_range: float = 1e3,
    samples: int = 10**6,
    assume_class: bool = False,
) -> Symbol:
    """Build a symbol and attach its certification report.

    ``assume_class`` skips the numeric check and records an override.
    """
    if not isinstance(psi, DirichletPolynomial):
        psi = DirichletPolynomial(psi)
    if assume_class:
        log.warning("class membership of %s ASSUMED by override, not certified", name or psi)
        report = CertificationReport(
            min_real_part=float("nan"), attained_at=0j, sample_count=0,
            lipschitz_bound=psi.abs_sum(log_power=1), t_range=0.0,
            verdict="certified", method="override", overridden=True,
        )
        return Symbol(c0, psi, report, name)
    report = certify_class(c0, psi, t_range, samples) if certify else None
    return Symbol(c0, psi, report, name)


def twist_symbol(phi: Symbol, chi: Character) -> Symbol:
    """Vertical limit ``phi_chi = c0*s + psi_chi``; class membership is inherited."""
    cert = phi.certification
    if cert is not None:
        cert = dataclasses.replace(cert, inherited=True)
    return Symbol(phi.c0, twist(phi.psi, chi), cert, phi.name)


def evaluate_symbol(phi: Symbol, s):
    if np.ndim(s) == 0:
        return phi.c0 * complex(s) + evaluate(phi.psi, s)
    return phi.c0 * np.asarray(s, dtype=complex) + evaluate(phi.psi, s)


def symbol_at_infinity(phi: Symbol):
    """``phi(+inf)``: the constant coefficient when c0 = 0, else ``UNBOUNDED``."""
    if phi.c0 >= 1:
        return UNBOUNDED
    return phi.psi[1]


def real_ratio(phi: Symbol, s):
    """``Re phi(s)/Re s`` (G>=1) or ``(Re phi(s) - 1/2)/Re s`` (G0)."""
    s = np.asarray(s, dtype=complex)
    shift = 0.5 if phi.c0 == 0 else 0.0
    return (evaluate_symbol(phi, s).real - shift) / s.real


# ------------------------------------------------------------------ files


def load_symbol(path: str | Path, certify: bool = True, t_range: float = 1e3, samples: int = 10**6) -> Symbol:
    """Read a symbol file (JSON or TOML): ``{c0, psi, assume_class?, name?}``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        import tomli

        obj = tomli.loads(text)
    else:
        obj = json.loads(text)
    return symbol_from_obj(obj, certify=certify, t_range=t_range, samples=samples, default_name=path.stem)


def symbol_from_obj(obj: dict, certify=True, t_range=1e3, samples=10**6, default_name="") -> Symbol:
    if "c0" not in obj or "psi" not in obj:
        raise ValueError("symbol file needs 'c0' and 'psi'")
    psi = DirichletPolynomial.from_json_obj(obj["psi"])
    return make_symbol(
        int(obj["c0"]), psi,
        name=obj.get("name", default_name),
        certify=certify, t_range=t_range, samples=samples,
        assume_class=bool(obj.get("assume_class", False)),
    )


def dump_symbol(phi: Symbol, path: str | Path) -> None:
    Path(path).write_text(json.dumps(phi.to_json_obj(), indent=2) + "\n")
