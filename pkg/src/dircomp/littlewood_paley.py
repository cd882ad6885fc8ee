"""Littlewood-Paley norm formulas for Dirichlet polynomials, computed two ways.

The closed form uses orthogonality of characters,
``int |f_chi'(sigma+it)|^2 dm(chi) = sum |a_n|^2 (log n)^2 n^{-2 sigma}``,
and exact sigma integrals.  The quadrature path averages over a randomly
shifted rank-1 lattice of characters and integrates (sigma, t) numerically.

Normalization: Hardy uses the factor 4 with sigma^1; the Bergman variant
uses ``2 * sigma^(2+alpha)``, which is what the T-average
``(1/T) int_{-T}^{T}`` produces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, optimize, special, stats

from .core import (
    HARDY, Character, DirichletPolynomial, Space, character_power, derivative,
    evaluate, lattice_points, twist,
)
from .counting import DEFAULT_TOL, restricted_counting
from .symbols import Symbol, twist_symbol


# ----------------------------------------------------------------- measures


@dataclass(frozen=True)
class MeasureSpec:
    """Finite positive measure on the real line, given through its quantile function."""

    kind: str
    a: float = -1.0
    b: float = 1.0
    nodes: tuple[float, ...] = ()
    density: tuple[float, ...] = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("uniform_window", "half_indicator", "cauchy_like", "tabulated"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "uniform_window" and not self.b > self.a:
            raise ValueError("uniform window needs a < b")
        if self.kind == "tabulated":
            x, d = np.asarray(self.nodes, float), np.asarray(self.density, float)
            if x.size < 2 or x.shape != d.shape or np.any(np.diff(x) <= 0) or np.any(d < 0):
                raise ValueError("tabulated measure needs increasing nodes and nonnegative density")
            if not integrate.trapezoid(d, x) > 0:
                raise ValueError("tabulated measure has zero mass")

    @classmethod
    def uniform_window(cls, a: float, b: float) -> "MeasureSpec":
        return cls("uniform_window", a, b)

    @classmethod
    def half_indicator(cls) -> "MeasureSpec":
        return cls("half_indicator")

    @classmethod
    def cauchy_like(cls) -> "MeasureSpec":
        return cls("cauchy_like")

    @classmethod
    def tabulated(cls, nodes, density) -> "MeasureSpec":
        return cls("tabulated", nodes=tuple(map(float, nodes)), density=tuple(map(float, density)))

    @property
    def total_mass(self) -> float:
        if self.kind in ("uniform_window", "half_indicator"):
            return 1.0
        if self.kind == "cauchy_like":
            # int (1+v^2)^{-3/4} dv
            return math.sqrt(math.pi) * special.gamma(0.25) / special.gamma(0.75)
        return float(integrate.trapezoid(self.density, self.nodes))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform_window":
            return self.a + (self.b - self.a) * u
        if self.kind == "half_indicator":
            return -1.0 + 2.0 * u
        if self.kind == "cauchy_like":
            # density prop. to (1 + v^2)^{-3/4}: v = T / sqrt(nu), T ~ Student t with nu = 1/2
            return stats.t.ppf(u, df=0.5) / math.sqrt(0.5)
        if "inv" not in self._cache:
            x, d = np.asarray(self.nodes), np.asarray(self.density)
            cdf = integrate.cumulative_trapezoid(d, x, initial=0.0)
            cdf /= cdf[-1]
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            self._cache["inv"] = interpolate.interp1d(cdf[keep], x[keep])
        return self._cache["inv"](u)


@dataclass(frozen=True)
class QuadratureParams:
    sigma_max: float | None = None
    sigma_nodes: int = 8
    t_nodes: int = 8
    chi_samples: int = 64
    shifts: int = 8
    seed: int = 0
    refine: int = 0

    def __post_init__(self):
        if min(self.sigma_nodes, self.t_nodes, self.chi_samples, self.shifts) < 1 or self.refine < 0:
            raise ValueError("quadrature node counts must be positive")

    def doubled(self) -> "QuadratureParams":
        return QuadratureParams(self.sigma_max, self.sigma_nodes, self.t_nodes, self.chi_samples,
                                self.shifts, self.seed, self.refine + 1)


# -------------------------------------------------------------- quadrature kit


def _gl(order: int):
    return np.polynomial.legendre.leggauss(order)


def composite_gl(edges, order: int, refine: int = 0):
    """Gauss-Legendre nodes/weights on consecutive panels, each bisected ``refine`` times."""
    edges = np.asarray(edges, dtype=float)
    if refine:
        k = 2**refine
        frac = np.arange(k) / k
        edges = np.concatenate([lo + (hi - lo) * frac for lo, hi in zip(edges[:-1], edges[1:])] + [edges[-1:]])
    x, w = _gl(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (hi + lo) + 0.5 * (hi - lo) * x[None, :]
    weights = 0.5 * (hi - lo) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _geometric_edges(start: float, stop: float, first: float) -> np.ndarray:
    edges = [0.0] if start == 0 else [start]
    h = first
    while edges[-1] + h < stop:
        edges.append(edges[-1] + h)
        h *= 2
    edges.append(stop)
    return np.asarray(edges)


def _sigma_power(space: Space) -> float:
    return 1.0 if space.is_hardy else 2.0 + space.alpha


def _lp_factor(space: Space) -> float:
    return 4.0 if space.is_hardy else 2.0


def sigma_cutoff(f: DirichletPolynomial, space: Space = HARDY, rel: float = 1e-13) -> float:
    """sigma beyond which every term's share of the sigma-integral is below ``rel``."""
    idx = [n for n, _ in f if n > 1]
    if not idx:
        return 1.0
    rate = 2 * math.log(min(idx))
    k = _sigma_power(space) + 1
    return optimize.brentq(lambda x: special.gammaincc(k, rate * x) - rel, 1e-9, 1e4)


# ------------------------------------------------------------------ closed form


def lp_norm_closed(f: DirichletPolynomial, space: Space = HARDY) -> float:
    """Right-hand side of the Littlewood-Paley formula with the chi-average done exactly."""
    total = abs(f[1]) ** 2
    p = _sigma_power(space)
    c = _lp_factor(space)
    for n, a in f:
        if n == 1:
            continue
        L = math.log(n)
        # int_0^inf sigma^p n^{-2 sigma} d sigma = Gamma(p+1) / (2 log n)^(p+1)
        total += c * abs(a) ** 2 * L**2 * special.gamma(p + 1) / (2 * L) ** (p + 1)
    return float(total)


def bergman_equivalence_bounds(alpha: float) -> tuple[float, float]:
    """Range of lp_norm_closed / norm_squared over f with no constant term."""
    base = special.gamma(3 + alpha) * 2.0 ** (-(2 + alpha))
    return base, base * ((1 + math.log(2)) / math.log(2)) ** (1 + alpha)


# ---------------------------------------------------------------- quadrature path


@dataclass(frozen=True)
class MCResult:
    value: float
    error: float
    shift_values: tuple[float, ...]
    quadrature_error: float

    def to_json_obj(self) -> dict:
        return {"value": self.value, "error_estimate": self.error,
                "shift_values": list(self.shift_values), "quadrature_error": self.quadrature_error}


def _lp_quadrature(b_idx, b_chi, sig, wsig, t, wt, p):
    """sum_chi mean of  sum_{sigma,t} w sigma^p |sum_n b_n chi(n) n^{-(sigma+it)}|^2."""
    s = sig[:, None] + 1j * t[None, :]
    E = np.exp(-np.log(b_idx)[:, None, None] * s[None, :, :])  # (n, S, T)
    vals = np.tensordot(b_chi, E, axes=(1, 0))  # (chi, S, T)
    W = (wsig * sig**p)[:, None] * wt[None, :]
    return float(np.mean(np.sum(np.abs(vals) ** 2 * W[None], axis=(1, 2))))


def lp_norm_mc(f: DirichletPolynomial, space: Space = HARDY, mu: MeasureSpec | None = None,
               q: QuadratureParams | None = None) -> MCResult:
    """Quadrature evaluation of the Littlewood-Paley right-hand side, divided by mu(R).

    Characters: ``q.shifts`` independent random shifts of a ``q.chi_samples``
    point lattice; the spread of the shift estimates gives the sampling error.
    The quadrature error is the change when every panel is halved.
    """
    mu = mu or MeasureSpec.half_indicator()
    q = q or QuadratureParams()
    const = abs(f[1]) ** 2
    df = derivative(f)
    if df.is_zero:
        return MCResult(const, 0.0, (const,) * q.shifts, 0.0)
    primes = sorted(df.support())
    idx = df.indices
    # exponent vectors of each index over the support primes
    expo = np.array([[_valuation(int(n), p) for p in primes] for n in idx], dtype=float)
    p = _sigma_power(space)
    c = _lp_factor(space)
    smax = q.sigma_max or sigma_cutoff(df, space)
    edges = _geometric_edges(0.0, smax, 1.0 / (4 * math.log(idx.max())))

    def rules(level):
        sig, wsig = composite_gl(edges, q.sigma_nodes, level)
        u, wu = composite_gl([0.0, 1.0], q.t_nodes, level + 2)
        return sig, wsig, mu.quantile(u), wu

    fine = rules(q.refine + 1)
    coarse = rules(q.refine)
    rng = np.random.default_rng(q.seed)
    ests, qerrs = [], []
    for _ in range(q.shifts):
        shift = rng.random(len(primes))
        x = lattice_points(len(primes), q.chi_samples, shift)
        chi_n = np.exp(2j * np.pi * x @ expo.T)  # (chi, n)
        b_chi = chi_n * df.values[None, :]
        vf = _lp_quadrature(idx, b_chi, *fine, p)
        vc = _lp_quadrature(idx, b_chi, *coarse, p)
        ests.append(const + c * vf)
        qerrs.append(c * abs(vf - vc))
    ests = np.asarray(ests)
    value = float(ests.mean())
    se = float(ests.std(ddof=1) / math.sqrt(len(ests))) if len(ests) > 1 else 0.0
    qerr = float(max(qerrs))
    err = math.sqrt(se**2 + qerr**2) + 1e-13 * abs(value)
    return MCResult(value, err, tuple(map(float, ests)), qerr)


def _valuation(n: int, p: int) -> int:
    e = 0
    while n % p == 0:
        n //= p
        e += 1
    return e


# ------------------------------------------------------------ finite-T Bergman


def finite_T_bergman_norm(f: DirichletPolynomial, alpha: float, sigma0: float, T: float,
                          sigma_max: float | None = None, order: int = 8) -> float:
    """(1/T) int_{sigma0}^{sigma_max} int_{-T}^{T} |f'(sigma+it)|^2 sigma^(2+alpha) dt dsigma."""
    if not (sigma0 > 0 and T > 0 and alpha > -1):
        raise ValueError("need sigma0 > 0, T > 0, alpha > -1")
    df = derivative(f)
    if df.is_zero:
        return 0.0
    smax = sigma_max or sigma_cutoff(df, Space(alpha))
    if smax <= sigma0:
        return 0.0
    L = math.log(df.indices.max())
    sig, wsig = composite_gl(_geometric_edges(sigma0, smax, max(sigma0, 1.0 / (4 * L))), order)
    # panels of length ~ one period of the fastest oscillation
    panels = max(4, int(math.ceil(2 * T * L / math.pi)))
    t, wt = composite_gl(np.linspace(-T, T, panels + 1), order)
    total = 0.0
    for k in range(0, len(sig), 64):
        s = sig[k:k + 64, None] + 1j * t[None, :]
        v = evaluate(df, s)
        total += float(np.sum(np.abs(v) ** 2 * wt[None, :] * (wsig[k:k + 64] * sig[k:k + 64] ** (2 + alpha))[:, None]))
    return total / T


# ---------------------------------------------------------- change of variables


@dataclass(frozen=True)
class CovReport:
    lhs: float
    rhs: float
    gap: float
    lhs_refined: float
    rhs_refined: float
    gap_refined: float
    gap_decreasing: bool
    counting_calls: int
    flagged_roots: int

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


def _rel_gap(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _curve_level_crossings(fun, lo, hi, level, samples=2000):
    """All x in [lo, hi] with fun(x) = level, from sign changes on a grid."""
    x = np.linspace(lo, hi, samples)
    y = fun(x) - level
    out = []
    for i in np.nonzero(np.sign(y[:-1]) * np.sign(y[1:]) < 0)[0]:
        out.append(optimize.brentq(lambda z: fun(z) - level, x[i], x[i + 1], xtol=1e-14))
    out.extend(x[np.nonzero(y == 0)[0]])
    return out


def _cov_lhs(g1, phi: Symbol, smax, q: QuadratureParams, level: int) -> float:
    edges = _geometric_edges(0.0, smax, 1.0 / 8)
    sig, wsig = composite_gl(edges, q.sigma_nodes, level)
    t, wt = composite_gl(np.linspace(-1, 1, 5), q.t_nodes, level)
    s = sig[:, None] + 1j * t[None, :]
    val = np.abs(evaluate(g1, phi(s))) ** 2 * np.abs(phi.derivative(s)) ** 2 * sig[:, None]
    return float(np.sum(val * wsig[:, None] * wt[None, :]))


def _cov_rhs(g1, phi: Symbol, umax, vmax, q: QuadratureParams, level: int, tol: float):
    c0 = phi.c0
    re_top = lambda x: phi(np.asarray(x) + 1j).real  # noqa: E731
    re_bot = lambda x: phi(np.asarray(x) - 1j).real  # noqa: E731
    re_axis = lambda t: phi(1j * np.asarray(t)).real  # noqa: E731
    smax = umax / c0
    # u-panel edges: kinks of the inner integral sit at extrema of Re phi along the
    # boundary curves of the strip image
    ubreak = {0.0, umax}
    for fun, lo, hi in ((re_top, 0, smax), (re_bot, 0, smax), (re_axis, -1, 1)):
        x = np.linspace(lo, hi, 4001)
        y = fun(x)
        ext = np.nonzero((np.diff(np.sign(np.diff(y))) != 0))[0] + 1
        for v in list(y[ext]) + [y[0]]:
            if 0 < v < umax:
                ubreak.add(float(v))
    edges = sorted(ubreak)
    # unit panels between kinks, then geometric growth where |g'|^2 decays exponentially
    fine_edges = [0.0]
    for lo, hi in zip(edges[:-2], edges[1:-1]):
        k = max(1, int(math.ceil(hi - lo)))
        fine_edges.extend(np.linspace(lo, hi, k + 1)[1:])
    fine_edges.extend(_geometric_edges(edges[-2], umax, 0.5)[1:])
    u, wu = composite_gl(fine_edges, q.sigma_nodes, level)
    total = 0.0
    calls = flagged = 0
    for uj, wj in zip(u, wu):
        vb = {-vmax, vmax}
        for fun, lo, hi, im in ((re_top, 0, uj / c0 * 1.001 + 1e-9, lambda x: phi(x + 1j).imag),
                                (re_bot, 0, uj / c0 * 1.001 + 1e-9, lambda x: phi(x - 1j).imag),
                                (re_axis, -1, 1, lambda t: phi(1j * t).imag)):
            for x in _curve_level_crossings(fun, lo, hi, uj):
                v = float(im(x))
                if -vmax < v < vmax:
                    vb.add(v)
        vedges = sorted(vb)
        vfine = []
        for lo, hi in zip(vedges[:-1], vedges[1:]):
            k = max(1, int(math.ceil(hi - lo)))
            vfine.extend(np.linspace(lo, hi, k + 1)[:-1])
        vfine.append(vmax)
        v, wv = composite_gl(vfine, q.t_nodes, level)
        w = uj + 1j * v
        fw = np.abs(evaluate(g1, w)) ** 2
        inner = 0.0
        for wk, fk, ck in zip(w, fw, wv):
            if fk * ck == 0:
                continue
            cv = restricted_counting(phi, wk, tol)
            calls += 1
            flagged += cv.flagged
            inner += ck * fk * cv.value
        total += wj * inner
    return total, calls, flagged


def change_of_variables_check(f: DirichletPolynomial, phi: Symbol, chi: Character | None = None,
                              q: QuadratureParams | None = None, tol: float = DEFAULT_TOL) -> CovReport:
    """Compare the two sides of the non-univalent change of variables w = phi_chi(s).

    LHS: int_0^smax int_{-1}^{1} |g'(phi_chi(s))|^2 |phi_chi'(s)|^2 sigma dt dsigma
    RHS: int int |g'(w)|^2 N_{phi_chi}(w) dv du,   g = f twisted by chi^c0.
    Both are computed at the given resolution and once more with every panel halved.
    """
    if phi.c0 < 1:
        raise ValueError("change of variables check needs characteristic >= 1")
    q = q or QuadratureParams()
    if chi is not None:
        phi = twist_symbol(phi, chi)
        f = twist(f, character_power(chi, phi.c0))
    g1 = derivative(f)
    if g1.is_zero:
        return CovReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, True, 0, 0)
    # |g'(w)|^2 <= (sum |b_n| n^{-u})^2: cut where this is 1e-14 of its value at u = 0
    nmin = min(n for n, _ in g1)
    umax = q.sigma_max or (math.log(1e7) / math.log(nmin) + 1.0)
    vmax = phi.c0 + abs(phi.psi[1].imag) + phi.psi.abs_sum() + 0.5
    smax = umax / phi.c0
    lhs = _cov_lhs(g1, phi, smax, q, q.refine)
    lhs2 = _cov_lhs(g1, phi, smax, q, q.refine + 1)
    rhs, c1, fl1 = _cov_rhs(g1, phi, umax, vmax, q, q.refine, tol)
    rhs2, c2, fl2 = _cov_rhs(g1, phi, umax, vmax, q, q.refine + 1, tol)
    gap, gap2 = _rel_gap(lhs, rhs), _rel_gap(lhs2, rhs2)
    return CovReport(float(lhs), float(rhs), float(gap), float(lhs2), float(rhs2), float(gap2),
                     bool(gap2 <= gap or gap2 < 1e-10), c1 + c2, fl1 + fl2)
