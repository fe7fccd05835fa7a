"""Model parameters and certified lattice sums for the long-range Ising model.

The antiferromagnetic kernel is |x - y|^-p.  Everything that needs an infinite
lattice sum goes through the effective one-dimensional potential

    v(x) = sum_{n in Z^(d-1)} (x^2 + |n|^2)^(-p/2) = V(x) + R(x),

with V(x) = kappa_p / |x|^(p-d+1) the continuum part and R(x) > 0 the
exponentially small remainder.  R is evaluated through its Poisson-summation
(Bessel-K) series, and sums of V over arithmetic progressions reduce to
Hurwitz zeta values, so every constant here is exact up to a tail bound that
is carried along explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

DEFAULT_TOL = 1e-10

_Q = math.exp(-2.0 * math.pi)


@dataclass(frozen=True)
class TailBound:
    """Certificate attached to a truncated sum.

    ``direction`` is ``"lower"`` when the truncated value underestimates the
    true one (all omitted terms are positive) and ``"upper"`` otherwise.
    """

    direct_radius: int
    tail_estimate: float
    direction: str = "lower"

    def __post_init__(self):
        if self.tail_estimate < 0:
            raise ValueError("tail_estimate must be non-negative")
        if self.direction not in ("lower", "upper", "two-sided"):
            raise ValueError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class Certified:
    """A float together with a rigorous bound on its absolute error."""

    value: float
    error: float
    tail: TailBound | None = None

    def __float__(self):
        return float(self.value)

    @property
    def lower(self) -> float:
        return self.value - self.error

    @property
    def upper(self) -> float:
        return self.value + self.error


@dataclass(frozen=True)
class PotentialValue(Certified):
    """v(x) with its split into the continuum part V and the rest R."""

    smooth: float = 0.0
    rest: float = 0.0


def _check_model(p: float, d: int) -> None:
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    if not p > 2 * d:
        raise ValueError(f"decay exponent must satisfy p > 2d (p={p}, d={d})")


def _check_tol(tol: float) -> None:
    if not tol > 0:
        raise ValueError("tol must be positive")


# ---------------------------------------------------------------------------
# elementary pieces
# ---------------------------------------------------------------------------

def pair_kernel(squared_distance, p: float):
    """|x - y|^-p given the integer squared distance |x - y|^2."""
    sq = np.asarray(squared_distance)
    if np.any(sq <= 0):
        raise ValueError("squared_distance must be >= 1")
    out = sq.astype(float) ** (-0.5 * p)
    return float(out) if out.ndim == 0 else out


def shell_tail(p: float, dim: int, radius: int) -> float:
    """Upper bound on sum_{n in Z^dim, |n|_inf > radius} |n|^-p.

    Integral comparison: each omitted unit cube lies outside the ball of
    radius ``radius + 1/2`` and |n| >= |y| - sqrt(dim)/2 inside it.
    """
    if p <= dim:
        raise ValueError("sum diverges for p <= dim")
    c = 0.5 * math.sqrt(dim)
    s0 = radius + 0.5 - c
    if s0 <= 0:
        raise ValueError("radius too small for the integral bound")
    omega = 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    return omega * (1.0 + c / s0) ** (dim - 1) * s0 ** (dim - p) / (p - dim)


@lru_cache(maxsize=None)
def _kappa(p: float, m: int) -> tuple[float, float]:
    # integral of (1+|y|^2)^(-p/2) over R^m, with y = tan(theta) radially
    if m == 1:
        val, err = integrate.quad(lambda t: math.cos(t) ** (p - 2), 0.0, math.pi / 2,
                                  epsabs=0.0, epsrel=1e-13, limit=200)
        return 2.0 * val, 2.0 * err
    if m == 2:
        val, err = integrate.quad(lambda t: math.sin(t) * math.cos(t) ** (p - 3),
                                  0.0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
        return 2.0 * math.pi * val, 2.0 * math.pi * err
    raise ValueError("only 1 or 2 transverse dimensions are supported")


def kappa_p(p: float, d: int, tol: float = DEFAULT_TOL) -> Certified:
    """kappa_p = integral over R^(d-1) of (1 + |y|^2)^(-p/2).

    Computed by adaptive quadrature after y = tan(theta), which maps the
    infinite domain onto [0, pi/2).
    """
    _check_tol(tol)
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    m = d - 1
    if not p > m + 1 - 1e-15 or p <= m:
        raise ValueError(f"integral diverges for p={p} in {m} dimensions")
    val, err = _kappa(float(p), m)
    return Certified(val, err)


# ---------------------------------------------------------------------------
# the rest R(x) of the effective potential
# ---------------------------------------------------------------------------

def _rest_terms(x: np.ndarray, p: float, m: int, tol: float):
    """R(x) for an array of x >= 1 plus a per-entry truncation bound."""
    s = 0.5 * p
    nu = s - 0.5 * m
    pref = 2.0 * math.pi ** (0.5 * m) / math.gamma(s)
    x = np.asarray(x, dtype=float)
    xmin = float(x.min())

    def term(omega):
        return pref * (omega / (2.0 * x)) ** nu * special.kv(nu, x * omega)

    if m == 1:
        mult_exp, mult = nu, (lambda K: 2.0)
    else:
        mult_exp, mult = nu + 1.0, (lambda K: 8.0 * (K + 1))
    K = 1
    while True:
        ratio = mult_exp / (K + 1) - 2.0 * math.pi * xmin
        if ratio < -1.0:
            t0 = term(2.0 * math.pi * (K + 1))
            tail = mult(K) * t0 / (1.0 - math.exp(ratio))
            if float(np.max(tail)) <= tol or K > 64:
                break
        K += 1
    total = np.zeros_like(x)
    if m == 1:
        for k in range(1, K + 1):
            total += 2.0 * term(2.0 * math.pi * k)
    else:
        # group the frequency lattice by squared norm
        ks = np.arange(-K, K + 1)
        sq = (ks[:, None] ** 2 + ks[None, :] ** 2).ravel()
        norms, counts = np.unique(sq[sq > 0], return_counts=True)
        for n2, c in zip(norms, counts):
            total += c * term(2.0 * math.pi * math.sqrt(n2))
    return total, tail, K


def _rest_tail_after(x_last: int, r_last: float, weight: str) -> float:
    """Bound on sum_{x > x_last} w(x) R(x) given R(x_last) <= r_last.

    Uses R(x) <= R(X) exp(-2 pi (x - X)), valid term by term in the
    Bessel series.
    """
    q = _Q
    if weight == "one":
        return r_last * q / (1.0 - q)
    if weight == "x":
        return r_last * (x_last * q / (1.0 - q) + q / (1.0 - q) ** 2)
    raise ValueError(weight)


@lru_cache(maxsize=None)
def _rest_table(p: float, m: int, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """R(1..X) until R underflows, with per-entry truncation bounds.

    Entry 0 of both arrays is unused (zero).
    """
    xs = np.arange(1, 65, dtype=float)
    r, trunc, _ = _rest_terms(xs, p, m, tol * 1e-3)
    nz = np.nonzero(r > 1e-300)[0]
    last = int(nz[-1]) + 1 if len(nz) else 1
    table = np.concatenate([[0.0], r[:last]])
    errs = np.concatenate([[0.0], np.broadcast_to(trunc, r.shape)[:last]])
    return table, errs


def _rest(x, p: float, m: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """R evaluated on an integer array; zero beyond the tabulated range."""
    table, _ = _rest_table(float(p), m, tol)
    x = np.abs(np.asarray(x, dtype=np.int64))
    out = np.zeros(x.shape)
    inside = (x >= 1) & (x < len(table))
    out[inside] = table[x[inside]]
    return out


def _rest_error(p: float, m: int, tol: float = DEFAULT_TOL) -> float:
    """Uniform bound on the error of ``_rest`` for one argument."""
    table, errs = _rest_table(float(p), m, tol)
    beyond = (table[-1] + errs[-1]) * _Q / (1.0 - _Q)
    return float(errs.max()) + beyond


# ---------------------------------------------------------------------------
# public sums
# ---------------------------------------------------------------------------

def effective_1d_potential(x: int, p: float, d: int, tol: float = DEFAULT_TOL) -> PotentialValue:
    """Certified v(x) = sum over the transverse lattice of (x^2+|n|^2)^(-p/2)."""
    _check_model(p, d)
    _check_tol(tol)
    if int(x) != x or x <= 0:
        raise ValueError("x must be a positive integer")
    m = d - 1
    kap, kerr = _kappa(float(p), m)
    smooth = kap * float(x) ** (m - p)
    r, trunc, K = _rest_terms(np.array([float(x)]), p, m, tol)
    rest = float(r[0])
    err = float(trunc[0]) + kerr * float(x) ** (m - p)
    return PotentialValue(smooth + rest, err, TailBound(K, float(trunc[0])),
                          smooth=smooth, rest=rest)


def potential_values(xs, p: float, d: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """v evaluated on an array of non-zero integers (vectorised, uncertified)."""
    m = d - 1
    kap, _ = _kappa(float(p), m)
    xs = np.abs(np.asarray(xs, dtype=np.int64))
    if np.any(xs == 0):
        raise ValueError("v is undefined at 0")
    return kap * xs.astype(float) ** (m - p) + _rest(xs, p, m, tol)


def _tail_sum_v(start: int, p: float, m: int, tol: float) -> tuple[float, float]:
    """sum_{x >= start} v(x) and its error bound."""
    kap, kerr = _kappa(float(p), m)
    sigma = p - m
    zeta_part = float(special.zeta(sigma, start))
    table, errs = _rest_table(float(p), m, tol)
    X = len(table) - 1
    r = table[start:].sum() if start <= X else 0.0
    err = kerr * zeta_part + errs[start:].sum() \
        + _rest_tail_after(X, table[-1] + errs[-1], "one") + 1e-16 * abs(kap * zeta_part)
    return kap * zeta_part + r, err


def _first_moment(p: float, m: int, tol: float) -> tuple[float, float]:
    """sum_{x >= 1} x v(x)."""
    kap, kerr = _kappa(float(p), m)
    zeta_part = float(special.zeta(p - m - 1))
    table, errs = _rest_table(float(p), m, tol)
    xs = np.arange(len(table))
    r = float(np.dot(xs, table))
    X = len(table) - 1
    err = kerr * zeta_part + float(np.dot(xs, errs)) \
        + _rest_tail_after(X, table[-1] + errs[-1], "x") + 1e-16 * abs(kap * zeta_part)
    return kap * zeta_part + r, err


def critical_coupling(p: float, d: int, tol: float = DEFAULT_TOL) -> Certified:
    """J_c = sum_{y1 > 0, y_perp} y1 / |y|^p, the zero-energy domain-wall coupling."""
    _check_model(p, d)
    _check_tol(tol)
    val, err = _first_moment(float(p), d - 1, tol)
    return Certified(val, err, TailBound(len(_rest_table(float(p), d - 1, tol)[0]) - 1, err))


@lru_cache(maxsize=None)
def _lattice_sum(p: float, dim: int, tol: float) -> tuple[float, float]:
    if dim == 1:
        return 2.0 * float(special.zeta(p)), 1e-16
    half, err = _tail_sum_v(1, p, dim - 1, tol)
    lower, lerr = _lattice_sum(p, dim - 1, tol)
    return 2.0 * half + lower, 2.0 * err + lerr


def lattice_sum(p: float, d: int, tol: float = DEFAULT_TOL) -> Certified:
    """S_p = sum_{n in Z^d, n != 0} |n|^-p."""
    _check_tol(tol)
    if d not in (1, 2, 3) or p <= d:
        raise ValueError("need d in {1,2,3} and p > d")
    val, err = _lattice_sum(float(p), d, tol)
    return Certified(val, err)


def facing_sum(dist, p: float, d: int, tol: float = DEFAULT_TOL):
    """F(D) = sum_{n != 0} min(|n_1|, D) / |n|^p, vectorised over D.

    ``dist`` may contain ``np.inf``; F(inf) = 2 J_c.  Returns (values, error)
    where error bounds every entry.
    """
    m = d - 1
    p = float(p)
    D = np.atleast_1d(np.asarray(dist, dtype=float))
    out = np.empty(D.shape)
    jc, jerr = _first_moment(p, m, tol)
    finite = np.isfinite(D)
    dmax = int(D[finite].max()) if finite.any() else 0
    err = 2.0 * jerr
    if dmax:
        xs = np.arange(1, dmax + 1)
        v = potential_values(xs, p, d, tol)
        cum_xv = np.concatenate([[0.0], np.cumsum(xs * v)])
        tails = np.empty(dmax + 1)
        for k in range(dmax + 1):
            tails[k], e = _tail_sum_v(k + 1, p, m, tol)
            err = max(err, 2.0 * (e * k + _rest_error(p, m, tol) * k * k + 1e-15 * cum_xv[k]))
        Di = D[finite].astype(int)
        out[finite] = 2.0 * (cum_xv[Di] + Di * tails[Di])
    out[~finite] = 2.0 * jc
    return out, err


def periodized_potential(r, period: int, p: float, d: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """sum_{q in Z} v(r + q * period) for 0 < r < period (vectorised)."""
    m = d - 1
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r >= period)):
        raise ValueError("need 0 < r < period")
    kap, _ = _kappa(float(p), m)
    sigma = p - m
    a = r / period
    smooth = kap * period ** (-sigma) * (special.zeta(sigma, a) + special.zeta(sigma, 1.0 - a))
    rest = np.zeros_like(r)
    table, _ = _rest_table(float(p), m, tol)
    X = len(table) - 1
    for q in range(-(X // period) - 2, X // period + 3):
        rest += _rest(np.abs(r + q * period).astype(np.int64), p, m, tol)
    return smooth + rest


def periodic_weighted_sum(weights: np.ndarray, p: float, d: int, tol: float = DEFAULT_TOL) -> Certified:
    """sum_{r >= 1} v(r) g(r) where g has period len(weights) and g(r) = weights[r % P]."""
    m = d - 1
    P = len(weights)
    w = np.asarray(weights, dtype=float)
    kap, kerr = _kappa(float(p), m)
    sigma = p - m
    t = np.arange(1, P + 1)
    z = special.zeta(sigma, t / P)
    g = w[t % P]
    smooth_terms = kap * P ** (-sigma) * g * z
    table, errs = _rest_table(float(p), m, tol)
    rs = np.arange(1, len(table))
    rest_terms = table[1:] * w[rs % P]
    val = math.fsum(smooth_terms) + math.fsum(rest_terms)
    wmax = float(np.abs(w).max()) if P else 0.0
    X = len(table) - 1
    err = (kerr * P ** (-sigma) * float(np.sum(np.abs(g) * z))
           + wmax * (float(errs.sum()) + _rest_tail_after(X, table[-1] + errs[-1], "one"))
           + 4e-16 * (math.fsum(np.abs(smooth_terms)) + math.fsum(np.abs(rest_terms))))
    return Certified(val, err)


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _jc_cached(p: float, d: int) -> float:
    return critical_coupling(p, d).value


@dataclass(frozen=True)
class ModelParams:
    """Couplings of one model instance; ``jc`` and ``tau`` are derived."""

    J: float
    p: float
    d: int = 2
    jc: float = field(init=False)
    tau: float = field(init=False)

    def __post_init__(self):
        _check_model(self.p, self.d)
        jc = _jc_cached(float(self.p), int(self.d))
        object.__setattr__(self, "jc", jc)
        object.__setattr__(self, "tau", 2.0 * (self.J - jc))

    @classmethod
    def from_tau(cls, tau: float, p: float, d: int = 2) -> "ModelParams":
        jc = _jc_cached(float(p), int(d))
        return cls(J=jc + 0.5 * tau, p=p, d=d)

    @property
    def kappa(self) -> float:
        return _kappa(float(self.p), self.d - 1)[0]

    @property
    def lattice_sum(self) -> float:
        return _lattice_sum(float(self.p), self.d, DEFAULT_TOL)[0]
