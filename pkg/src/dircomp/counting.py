"""Preimage enumeration for phi(s) = w and the Nevanlinna-type counting functions.

Roots are located with the argument principle on rectangles: the winding
number of ``phi - w`` around a rectangle is accumulated segment by segment,
each segment accepted only when a Gauss-Legendre estimate of the integral of
``phi'/(phi - w)`` agrees with the principal logarithm of the endpoint ratio.
Rectangles are split until each holds one root (or shrinks below ``tol``),
then roots are polished with damped Newton.
"""
from __future__ import annotations

import logging
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .core import Character, lattice_characters
from .symbols import Symbol, twist_symbol

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_TTRUNC = 64.0
RESIDUAL_TARGET = 1e-9
# rectangles this small with winding >= 2 are reported as one multiple root
CLUSTER_DIAMETER = 1e-4

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class BoundaryHit(RuntimeError):
    """The winding integer could not be certified (a root sits on or near the contour)."""


class AdaptiveBoundFailure(RuntimeError):
    """No finite sigma window contains all preimages (w = phi(+inf))."""


@dataclass(frozen=True)
class Rectangle:
    sigma_lo: float
    sigma_hi: float
    t_lo: float
    t_hi: float

    def __post_init__(self):
        if not (self.sigma_hi > self.sigma_lo and self.t_hi > self.t_lo):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.sigma_lo + self.sigma_hi), 0.5 * (self.t_lo + self.t_hi))

    @property
    def width(self) -> float:
        return self.sigma_hi - self.sigma_lo

    @property
    def height(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def vertices(self) -> list[complex]:
        return [
            complex(self.sigma_lo, self.t_lo),
            complex(self.sigma_hi, self.t_lo),
            complex(self.sigma_hi, self.t_hi),
            complex(self.sigma_lo, self.t_hi),
        ]

    def contains(self, s: complex, pad: float = 0.0) -> bool:
        return (self.sigma_lo - pad < s.real < self.sigma_hi + pad
                and self.t_lo - pad < s.imag < self.t_hi + pad)

    def split(self, frac: float = 0.5) -> tuple["Rectangle", "Rectangle"]:
        if self.height >= self.width:
            cut = self.t_lo + frac * self.height
            return (Rectangle(self.sigma_lo, self.sigma_hi, self.t_lo, cut),
                    Rectangle(self.sigma_lo, self.sigma_hi, cut, self.t_hi))
        cut = self.sigma_lo + frac * self.width
        return (Rectangle(self.sigma_lo, cut, self.t_lo, self.t_hi),
                Rectangle(cut, self.sigma_hi, self.t_lo, self.t_hi))


@dataclass(frozen=True)
class Root:
    s: complex
    multiplicity: int
    residual: float
    converged: bool = True


@dataclass(frozen=True)
class RootSet:
    roots: tuple[Root, ...]
    window: Rectangle
    total_winding: int
    jitter_attempts: int = 0

    @property
    def count(self) -> int:
        return sum(r.multiplicity for r in self.roots)

    @property
    def flagged(self) -> tuple[Root, ...]:
        return tuple(r for r in self.roots if not r.converged)

    def weighted_sum(self, power: float = 1.0, t_abs_below: float = math.inf, sigma_above: float = 0.0) -> float:
        return float(sum(r.multiplicity * r.s.real ** power for r in self.roots
                         if abs(r.s.imag) < t_abs_below and r.s.real > sigma_above))


# ------------------------------------------------------------ argument principle


class _Target:
    """``F(s) = phi(s) - w`` with a derivative bound usable on half-planes."""

    def __init__(self, phi: Symbol, w: complex):
        self.phi = phi
        self.w = complex(w)
        psi = phi.psi
        idx = psi.indices
        mask = idx > 1
        self._logn = np.log(idx[mask])
        self._absa = np.abs(psi.values[mask])
        self.scale = 1.0 + abs(self.w) + float(np.abs(psi.values).sum())

    def f(self, s):
        return self.phi(s) - self.w

    def df(self, s):
        return self.phi.derivative(s)

    def dbound(self, sigma_lo: float) -> float:
        """sup |phi'| on Re s >= sigma_lo."""
        return self.phi.c0 + float(np.sum(self._absa * self._logn * np.exp(-sigma_lo * self._logn)))

    def excluded(self, rect: Rectangle) -> bool:
        """True when |F| is provably nonzero on the closed rectangle."""
        c = rect.center
        return abs(self.f(c)) > 0.5 * rect.diameter * self.dbound(rect.sigma_lo) * (1 + 1e-9) + 1e-300


def winding_number(target: _Target, rect: Rectangle, min_seg: float) -> int:
    """Winding number of F around ``rect`` (counterclockwise)."""
    verts = rect.vertices()
    starts, ends = [], []
    for k in range(4):
        a, b = verts[k], verts[(k + 1) % 4]
        pieces = max(1, int(math.ceil(abs(b - a) / 0.25)))
        x = np.linspace(0.0, 1.0, pieces + 1)
        pts = a + (b - a) * x
        starts.append(pts[:-1])
        ends.append(pts[1:])
    a = np.concatenate(starts)
    b = np.concatenate(ends)
    total = 0.0
    floor = 1e-14 * target.scale
    for _ in range(200):
        if a.size == 0:
            break
        fa = target.f(a)
        fb = target.f(b)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        fn = target.f(nodes)
        if (np.min(np.abs(fa), initial=np.inf) <= floor or np.min(np.abs(fb), initial=np.inf) <= floor
                or np.min(np.abs(fn), initial=np.inf) <= floor):
            raise BoundaryHit("contour passes through a preimage")
        gl = half * np.sum(_GL_W[None, :] * target.df(nodes) / fn, axis=1)
        lg = np.log(fb / fa)
        ok = (np.abs(gl - lg) < 1e-3) & (np.abs(gl.imag) <= 1.0)
        total += float(np.sum(lg[ok].imag))
        bad = ~ok
        if not bad.any():
            a = a[:0]
            break
        a, b, mid = a[bad], b[bad], mid[bad]
        if np.min(np.abs(b - a)) < min_seg:
            raise BoundaryHit(f"segment refinement below {min_seg:g} near {mid[0]:.6g}")
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
    else:
        raise BoundaryHit("winding refinement did not terminate")
    wind = total / (2 * math.pi)
    k = round(wind)
    if abs(wind - k) > 0.25:
        raise BoundaryHit(f"non-integer winding {wind:.4f}")
    return int(k)


def _newton(target: _Target, s0: complex, mult: int = 1, iters: int = 60,
            max_step: float = 1.0) -> tuple[complex, float]:
    s = complex(s0)
    fs = target.f(s)
    for _ in range(iters):
        d = target.df(s)
        if d == 0:
            break
        step = mult * fs / d
        if abs(step) > max_step:
            # far steps only reach overflow territory in the left half-plane
            step *= max_step / abs(step)
        lam = 1.0
        for _ in range(30):
            cand = s - lam * step
            fc = target.f(cand)
            if abs(fc) < abs(fs) or abs(fs) == 0:
                break
            lam *= 0.5
        else:
            break
        done = abs(s - cand) <= 1e-15 * max(1.0, abs(s))
        s, fs = cand, fc
        if done or abs(fs) <= 1e-15 * target.scale:
            break
    return s, abs(fs)


_SPLITS = (0.5, 0.4321, 0.5679, 0.3719, 0.6281, 0.2953)


def _isolate(target: _Target, rect: Rectangle, wind: int, tol: float, min_seg: float, out: list[Root]) -> None:
    if wind == 0:
        return
    if wind == 1:
        s, res = _newton(target, rect.center, max_step=rect.diameter)
        if res <= RESIDUAL_TARGET and rect.contains(s):
            out.append(Root(s, 1, res, True))
            return
    if rect.diameter < tol:
        out.append(_cluster(target, rect, wind, tol))
        return
    last_err = None
    for frac in _SPLITS:
        kids = rect.split(frac)
        try:
            winds = [0 if target.excluded(k) else winding_number(target, k, min_seg) for k in kids]
        except BoundaryHit as err:
            last_err = err
            continue
        if sum(winds) != wind:
            last_err = BoundaryHit(f"child windings {winds} do not sum to {wind}")
            continue
        for k, wk in zip(kids, winds):
            _isolate(target, k, wk, tol, min_seg, out)
        return
    if wind >= 2 and rect.diameter < CLUSTER_DIAMETER:
        # |F| ~ dist^wind falls under the evaluation floor before the roots separate
        out.append(_cluster(target, rect, wind, tol))
        return
    raise BoundaryHit(f"could not split {rect}: {last_err}")


def _cluster(target: _Target, rect: Rectangle, wind: int, tol: float) -> Root:
    """One root carrying the multiplicity of an unresolvable cluster."""
    s, res = _newton(target, rect.center, mult=wind, max_step=max(rect.diameter, tol))
    if not rect.contains(s, pad=tol):
        s, res = rect.center, abs(target.f(rect.center))
    ok = res <= RESIDUAL_TARGET
    if not ok:
        log.warning("Newton polishing stalled at %s (residual %.2e)", s, res)
    return Root(s, wind, res, ok)


def find_preimages(phi: Symbol, w: complex, window: Rectangle, tol: float = DEFAULT_TOL) -> RootSet:
    """All s in ``window`` with ``phi(s) = w``, with multiplicity.

    Raises BoundaryHit when a root lies (numerically) on the outer contour.
    """
    target = _Target(phi, w)
    min_seg = tol / 8
    if target.excluded(window):
        return RootSet((), window, 0)
    total = winding_number(target, window, min_seg)
    if total < 0:
        raise BoundaryHit(f"negative winding {total} for an analytic map")
    roots: list[Root] = []
    _isolate(target, window, total, tol, min_seg, roots)
    roots.sort(key=lambda r: (r.s.imag, r.s.real))
    found = sum(r.multiplicity for r in roots)
    if found != total:
        raise BoundaryHit(f"isolated {found} roots but winding is {total}")
    return RootSet(tuple(roots), window, total)


def _jitter_seed(w: complex, window: Rectangle) -> int:
    raw = struct.pack("<6d", w.real, w.imag, window.sigma_lo, window.sigma_hi, window.t_lo, window.t_hi)
    return zlib.crc32(raw)


def find_preimages_robust(phi: Symbol, w: complex, window: Rectangle, tol: float = DEFAULT_TOL,
                          retries: int = 5) -> RootSet:
    """``find_preimages`` with deterministic window jitter (<= 10*tol) on BoundaryHit."""
    w = complex(w)
    try:
        return find_preimages(phi, w, window, tol)
    except BoundaryHit as err:
        last = err
    rng = np.random.default_rng(_jitter_seed(w, window))
    for attempt in range(1, retries + 1):
        d = rng.uniform(-10 * tol, 10 * tol, size=4)
        lo = max(window.sigma_lo + d[0], 0.5 * window.sigma_lo)
        moved = Rectangle(lo, window.sigma_hi + d[1], window.t_lo + d[2], window.t_hi + d[3])
        try:
            rs = find_preimages(phi, w, moved, tol)
        except BoundaryHit as err:
            last = err
            continue
        return replace(rs, jitter_attempts=attempt)
    raise BoundaryHit(f"gave up after {retries} jittered retries: {last}")


# ------------------------------------------------------------ counting functions


@dataclass(frozen=True)
class CountingValue:
    value: float
    kind: str
    w: complex
    params: dict = field(default_factory=dict)
    note: str = ""
    n_roots: int = 0
    increment: float = 0.0
    flagged: int = 0

    def diagnostics(self) -> str:
        parts = [f"roots={self.n_roots}"]
        if self.kind == "full":
            parts.append(f"tail_increment={self.increment:.3e}")
        if self.flagged:
            parts.append(f"flagged={self.flagged}")
        if self.note:
            parts.append(self.note)
        return ";".join(parts)


def sigma_upper_bound(phi: Symbol, w: complex, tol: float = DEFAULT_TOL) -> float:
    """A sigma beyond which phi(s) = w has no solution.

    Certified G>=1 symbols use Re phi >= c0 Re s.  Otherwise the coefficient
    tail ``sum_{n>=2} |a_n| n^{-sigma}`` is used: no root where
    ``c0*sigma + Re a_1 - tail > Re w`` or (c0 = 0) ``tail < |w - a_1|``.
    """
    w = complex(w)
    psi = phi.psi
    if phi.c0 >= 1 and phi.certified:
        base = w.real / phi.c0
        return base + max(1e-3 * base, 10 * tol)
    a1 = psi[1]
    tail0 = psi.abs_sum()
    gap = abs(w - a1)
    if phi.c0 == 0 and gap == 0:
        raise AdaptiveBoundFailure("w equals phi(+inf); preimages escape to +inf")

    def clear(sig):
        tail = psi.abs_sum(sigma=sig)
        if phi.c0 * sig + a1.real - tail > w.real:
            return True
        return phi.c0 == 0 and tail < gap * (1 - 1e-9)

    if tail0 == 0:
        if phi.c0 == 0:
            return 10 * tol
        return max((w.real - a1.real) / phi.c0, 0.0) + 1e-3 * abs(w) + 10 * tol
    hi = 1.0
    while not clear(hi):
        hi *= 2
        if hi > 1e6:
            raise AdaptiveBoundFailure(f"no finite sigma bound for w={w}")
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if clear(mid):
            hi = mid
        else:
            lo = mid
    return hi * (1 + 1e-6) + 10 * tol


def _roots(phi, w, t_lo, t_hi, sigma_lo, tol):
    hi = sigma_upper_bound(phi, w, tol)
    if hi <= sigma_lo:
        return None
    return find_preimages_robust(phi, w, Rectangle(sigma_lo, hi, t_lo, t_hi), tol)


def _check_w(w):
    w = complex(w)
    if not w.real > 0:
        raise ValueError(f"counting functions need Re w > 0, got {w}")
    return w


def nevanlinna_full(phi: Symbol, w: complex, t_trunc: float = DEFAULT_TTRUNC, tol: float = DEFAULT_TOL) -> CountingValue:
    """Sum of Re s over preimages with |Im s| < t_trunc, with multiplicity."""
    w = _check_w(w)
    rs = _roots(phi, w, -t_trunc, t_trunc, tol, tol)
    if rs is None:
        return CountingValue(0.0, "full", w, {"t_trunc": t_trunc})
    value = rs.weighted_sum()
    half = rs.weighted_sum(t_abs_below=t_trunc / 2)
    return CountingValue(value, "full", w, {"t_trunc": t_trunc},
                         note=f"window |Im s|<{t_trunc:g}, sigma>{tol:g}",
                         n_roots=rs.count, increment=value - half, flagged=len(rs.flagged))


def weighted_counting(phi: Symbol, w: complex, alpha: float, tol: float = DEFAULT_TOL) -> CountingValue:
    """Sum of (Re s)^(2+alpha) over preimages with |Im s| < 1."""
    if not alpha >= -1:
        raise ValueError("weighted counting needs alpha >= -1")
    w = _check_w(w)
    kind = "restricted" if alpha == -1 else "weighted"
    rs = _roots(phi, w, -1.0, 1.0, tol, tol)
    if rs is None:
        return CountingValue(0.0, kind, w, {"alpha": alpha})
    return CountingValue(rs.weighted_sum(power=2 + alpha, t_abs_below=1.0), kind, w, {"alpha": alpha},
                         note="window |Im s|<1", n_roots=rs.count, flagged=len(rs.flagged))


def restricted_counting(phi: Symbol, w: complex, tol: float = DEFAULT_TOL) -> CountingValue:
    """Sum of Re s over preimages with |Im s| < 1."""
    return weighted_counting(phi, w, -1.0, tol)


def mean_counting(phi: Symbol, sigma0: float, T: float, w: complex, alpha: float,
                  tol: float = DEFAULT_TOL) -> CountingValue:
    """(1/T) * sum of (Re s)^(2+alpha) over preimages with |Im s| < T, Re s > sigma0."""
    if not (sigma0 > 0 and T > 0):
        raise ValueError("need sigma0 > 0 and T > 0")
    if not alpha > -1:
        raise ValueError("need alpha > -1")
    w = complex(w)
    rs = _roots(phi, w, -T, T, sigma0, tol)
    if rs is None:
        return CountingValue(0.0, "mean", w, {"sigma0": sigma0, "T": T, "alpha": alpha})
    value = rs.weighted_sum(power=2 + alpha) / T
    return CountingValue(value, "mean", w, {"sigma0": sigma0, "T": T, "alpha": alpha},
                         note=f"sigma in ({sigma0:g}, {rs.window.sigma_hi:.6g})",
                         n_roots=rs.count, flagged=len(rs.flagged))


# ------------------------------------------------------------ bound diagnostics


def estimate_bound_constant(phi: Symbol, w_grid: Sequence[complex], chars: Sequence[Character],
                            tol: float = DEFAULT_TOL) -> float:
    """max of N_{phi_chi}(w) (1 + (Im w)^2) / Re w over the grid and characters.

    A lower estimate of the best constant in the uniform restricted bound;
    monotone under refinement of either set.
    """
    w_grid = [complex(w) for w in w_grid]
    chars = list(chars)
    if not w_grid or not chars:
        raise ValueError("need a nonempty w grid and character sample")
    if phi.c0 < 1:
        raise ValueError("bound constant is defined for characteristic >= 1")
    best = 0.0
    for chi in chars:
        phic = twist_symbol(phi, chi)
        for w in w_grid:
            if not 0 < w.real < phi.c0:
                raise ValueError(f"need 0 < Re w < c0, got {w}")
            n = restricted_counting(phic, w, tol).value
            best = max(best, n * (1 + w.imag**2) / w.real)
    return best


@dataclass(frozen=True)
class LittleOReport:
    sigmas: tuple[float, ...]
    ratios: tuple[float, ...]
    verdict: str
    threshold: float
    uniformity: str
    t_values: tuple[float, ...] = ()

    def to_json_obj(self) -> dict:
        return {"sigmas": list(self.sigmas), "ratios": list(self.ratios), "verdict": self.verdict,
                "threshold": self.threshold, "uniformity": self.uniformity,
                "t_values": list(self.t_values)}


def littleo_verdict(ratios: Sequence[float], threshold: float = 0.05) -> str:
    r = np.asarray(ratios, dtype=float)
    tail = r[len(r) // 2:]
    nonincreasing = bool(np.all(np.diff(tail) <= 1e-9 + 1e-6 * tail[:-1]))
    if r[-1] < threshold and nonincreasing:
        return "consistent-with-little-o"
    if r[-1] >= threshold and r[-1] >= 0.9 * r[len(r) // 2]:
        return "violated"
    return "inconclusive"


def verify_criterion_littleo(phi: Symbol, sigmas: Iterable[float] | None = None,
                             t_values: Iterable[float] | None = None,
                             chars: Sequence[Character] | None = None,
                             t_trunc: float = 16.0, threshold: float = 0.05,
                             tol: float = DEFAULT_TOL) -> LittleOReport:
    """R(sigma) = max over Re w = sigma of N(w)/Re w for decreasing sigma."""
    if phi.c0 < 1:
        raise ValueError("little-o criterion applies to characteristic >= 1")
    sigmas = tuple(float(x) for x in (sigmas if sigmas is not None else 2.0 ** -np.arange(3, 11)))
    if any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigma sequence must be strictly decreasing")
    t_values = tuple(float(x) for x in (t_values if t_values is not None else np.linspace(-8, 8, 33)))
    symbols = [phi] if not chars else [twist_symbol(phi, c) for c in chars]
    ratios = []
    for sig in sigmas:
        r = 0.0
        for p in symbols:
            for t in t_values:
                r = max(r, nevanlinna_full(p, complex(sig, t), t_trunc, tol).value / sig)
        ratios.append(r)
    return LittleOReport(sigmas, tuple(ratios), littleo_verdict(ratios, threshold), threshold,
                         "sampled-uniform" if chars else "single-symbol", t_values)


def default_bound_chars(phi: Symbol, n: int) -> list[Character]:
    return lattice_characters(sorted(phi.psi.support()), n)
