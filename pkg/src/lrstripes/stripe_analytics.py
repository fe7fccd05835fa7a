"""Energetics of striped (2D) and slabbed (3D) configurations.

Periodic stripes of width h are reduced to a one-dimensional chain with the
effective potential v; their energy per site is

    e_s(h) = 2J/h + sum_{r >= 1} v(r) (c_h(r) - 1),

with c_h the autocorrelation of the period-2h square wave.  The strip model
(a band of height ell, periodic horizontally) uses the kernel phi_ell in
place of v.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .energy_decomposition import BoundReport
from .model_core import (Certified, ModelParams, _kappa, facing_sum, periodic_weighted_sum,
                         potential_values)

HOMOGENEOUS = math.inf  # h* marker when the uniform state is optimal


@dataclass(frozen=True)
class StripeProfile:
    """Block widths h_1..h_m of alternating sign along ``axis``."""

    widths: tuple[int, ...]
    axis: int = 0

    def __post_init__(self):
        w = tuple(int(x) for x in self.widths)
        if not w or min(w) < 1:
            raise ValueError("stripe widths must be >= 1")
        object.__setattr__(self, "widths", w)

    @property
    def length(self) -> int:
        return sum(self.widths)

    def __len__(self):
        return len(self.widths)

    def signs(self, first_sign: int = -1) -> np.ndarray:
        """The chain of spins described by the profile."""
        return np.concatenate([np.full(h, first_sign * (-1) ** i, dtype=np.int8)
                               for i, h in enumerate(self.widths)])


@dataclass
class StripeEnergyCurve:
    hs: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    h_star: float
    e_star: float


def square_wave_weights(h: int) -> np.ndarray:
    """c_h(t) - 1 for t = 0..2h-1 (one period)."""
    t = np.arange(2 * h)
    u = np.minimum(t, 2 * h - t)
    return -2.0 * u / h


def stripe_energy_per_site(h: int, params: ModelParams, tol: float = 1e-10) -> Certified:
    if int(h) != h or h < 1:
        raise ValueError("h must be a positive integer")
    h = int(h)
    s = periodic_weighted_sum(square_wave_weights(h), params.p, params.d, tol)
    return Certified(2.0 * params.J / h + s.value, s.error)


def stripe_excess(h: int, p: float, d: int, tol: float = 1e-10) -> float:
    """e_s(h) - tau/h, computed without cancellation.

    Since 2 J_c = 2 sum_r r v(r), the excess is sum_{r > h} v(r) b(r) with
    b(r) = c_h(r) - 1 + 2r/h >= 0.  The terms with r <= R0 are summed
    directly; beyond R0 (a multiple of 2h) each residue class is summed in
    closed form through Hurwitz zeta values.
    """
    h = int(h)
    m = d - 1
    P = 2 * h
    J0 = max(8, -(-256 // P))
    R0 = P * J0
    r = np.arange(h + 1, R0 + 1)
    u = np.minimum(r % P, P - r % P)
    b = (2.0 * r - 2.0 * u) / h
    head = math.fsum(potential_values(r, p, d, tol) * b)
    kap, _ = _kappa(float(p), m)
    sigma = p - m
    t = np.arange(1, P + 1)
    a = t / P
    ut = np.minimum(t, P - t)
    coef = (2.0 * t - 2.0 * ut) / h  # b(t + P j) = coef_t + 4 j
    z0 = special.zeta(sigma, J0 + a)
    z1 = special.zeta(sigma - 1.0, J0 + a)
    tail = kap * P ** (-sigma) * np.sum(coef * z0 + 4.0 * (z1 - a * z0))
    return head + float(tail)


def _eta(z: float) -> float:
    return (1.0 - 2.0 ** (1.0 - z)) * float(special.zeta(z))


@lru_cache(maxsize=None)
def _tanh_integral(s: float) -> tuple[float, float]:
    """integral_0^inf a^s (1 - tanh a) da by quadrature and in closed form."""
    def f(a):
        # 1 - tanh a = 2 e^(-2a) / (1 + e^(-2a)), stable for large a
        q = math.exp(-2.0 * a)
        return a ** s * 2.0 * q / (1.0 + q)

    quad, qerr = integrate.quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    closed = 2.0 ** (-s) * math.gamma(s + 1.0) * _eta(s + 1.0)
    return quad, closed


def asymptotic_constant_A(p: float, d: int, tol: float = 1e-10) -> Certified:
    """A_d(p) = kappa_p / Gamma(p-d+1) * 2^(p-d) * integral_0^inf a^(p-d-2) (1 - tanh a) da.

    The integral is evaluated by quadrature; its closed form
    2^-s Gamma(s+1) eta(s+1) (eta the alternating zeta) serves as the
    certificate.
    """
    if not p > d + 1:
        raise ValueError("A_d(p) needs p > d + 1")
    s = p - d - 2.0
    quad, closed = _tanh_integral(float(s))
    kap, kerr = _kappa(float(p), d - 1)
    pref = 2.0 ** (p - d) / math.gamma(p - d + 1.0)
    val = kap * pref * quad
    err = pref * (kerr * quad + kap * abs(quad - closed)) + 1e-15 * val
    if err > tol * max(1.0, val):
        raise ArithmeticError(f"quadrature disagrees with closed form ({err:.2e})")
    return Certified(val, err)


def predicted_optimum(params: ModelParams) -> tuple[float, float]:
    """Continuum predictions for (h*, e_S) from the leading terms tau/h + A/h^(p-d)."""
    if params.tau >= 0:
        return HOMOGENEOUS, 0.0
    k = params.p - params.d
    A = asymptotic_constant_A(params.p, params.d).value
    t = abs(params.tau)
    h = ((k * A) / t) ** (1.0 / (k - 1))
    e = -(k - 1) / (k ** k * A) ** (1.0 / (k - 1)) * t ** (k / (k - 1))
    return h, e


def stripe_energy_curve(params: ModelParams, h_max: int, tol: float = 1e-10) -> StripeEnergyCurve:
    hs = np.arange(1, int(h_max) + 1)
    vals = np.empty(len(hs))
    errs = np.empty(len(hs))
    for i, h in enumerate(hs):
        c = stripe_energy_per_site(int(h), params, tol)
        vals[i], errs[i] = c.value, c.error
    k = int(np.argmin(vals))
    if params.tau >= 0 or vals[k] >= 0:
        return StripeEnergyCurve(hs, vals, errs, HOMOGENEOUS, 0.0)
    return StripeEnergyCurve(hs, vals, errs, float(hs[k]), float(vals[k]))


def optimal_stripe(params: ModelParams, h_max: int | None = None,
                   tol: float = 1e-10) -> tuple[float, float]:
    """Integer argmin of e_s (smallest on ties) and the minimum value.

    h_max is doubled until the minimum is interior.  For tau >= 0 returns the
    homogeneous marker (inf, 0.0).
    """
    if params.tau >= 0:
        return HOMOGENEOUS, 0.0
    if h_max is None:
        h_max = max(8, int(2 * predicted_optimum(params)[0]) + 4)
    while True:
        curve = stripe_energy_curve(params, h_max, tol)
        if curve.h_star < h_max:
            return curve.h_star, curve.e_star
        h_max *= 2


# ---------------------------------------------------------------------------
# strip model: kernel phi_ell, block energies, corner energy, chessboard check
# ---------------------------------------------------------------------------

def _phi_weights(ell: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(-(ell - 1), ell)
    return k.astype(float), (ell - np.abs(k)).astype(float) / ell


def quasi1d_kernel(x, ell: int, L: int | None, params: ModelParams, tol: float = 1e-12):
    """phi_ell(x) = (1/ell) sum_q sum_{m,n=1..ell} [(x + 2qL)^2 + (m-n)^2]^(-p/2).

    L=None gives the infinite-strip kernel (q = 0 only).  Vectorised in x;
    x must avoid multiples of 2L (and 0).
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    p = params.p
    x = np.asarray(x, dtype=float)
    k, wk = _phi_weights(ell)
    if L is None:
        if np.any(x == 0):
            raise ValueError("phi is undefined at 0")
        return np.sum(wk * ((x[..., None] ** 2 + k ** 2) ** (-0.5 * p)), axis=-1)
    period = 2 * L
    xr = np.mod(x + L, period) - L  # representative in [-L, L)
    if np.any(xr == 0):
        raise ValueError("phi is undefined at multiples of 2L")
    # images with |q| > Q satisfy |x + q 2L| >= (2Q + 1) L
    Q = 1
    while ell * 2.0 * ((2 * Q + 1) * L) ** (1 - p) / (p - 1) / L > tol and Q < 10000:
        Q += 1
    out = np.zeros(xr.shape)
    for q in range(-Q, Q + 1):
        out += np.sum(wk * (((xr + q * period)[..., None]) ** 2 + k ** 2) ** (-0.5 * p), axis=-1)
    return out


def _phi_tail(ell: int, p: float, R: int) -> float:
    """Bound on sum_{r > R} phi_ell^inf(r) (phi <= ell r^-p)."""
    return ell * R ** (1.0 - p) / (p - 1.0)


def block_energy_per_site(h: int, ell: int, params: ModelParams, tol: float = 1e-10) -> Certified:
    """Energy per site of period-2h alternating blocks in the strip model (L -> inf)."""
    h = int(h)
    if h < 1 or ell < 1:
        raise ValueError("h and ell must be >= 1")
    p = params.p
    R = 2 * h
    while 2.0 * _phi_tail(ell, p, R) > tol:
        R += 2 * h
    r = np.arange(1, R + 1)
    phi = quasi1d_kernel(r, ell, None, params)
    w = square_wave_weights(h)[r % (2 * h)]
    val = 2.0 * params.J / h + math.fsum(phi * w)
    return Certified(val, 2.0 * _phi_tail(ell, p, R) + 1e-15 * math.fsum(np.abs(phi * w)))


def corner_sum(h: int, ell: int, p: float, M: int = 2000) -> tuple[float, float]:
    """A_ell(h) = -8 sum_{m,n >= 1} min(m,h) min(n,ell) (m^2+n^2)^(-p/2), with error bound."""
    m = np.arange(1, M + 1, dtype=float)
    wm = np.minimum(m, h)
    wn = np.minimum(m, ell)
    total = 0.0
    for i in range(0, M, 512):
        mi = m[i:i + 512, None]
        f = (mi ** 2 + m[None, :] ** 2) ** (-0.5 * p)
        total += float(np.sum(wm[i:i + 512, None] * wn[None, :] * f))
    return -8.0 * total, 8.0 * _quadrant_tail(p, M)


def _quadrant_tail(p: float, M: int) -> float:
    """Bound on sum_{m,n >= 1, max(m,n) > M} m n (m^2+n^2)^(-p/2)."""
    # m n <= r^2 / 2 and the quadrant holds a quarter of the shell
    from .model_core import shell_tail
    return shell_tail(p - 2.0, 2, M) / 8.0


def corner_deficit(h: int, ell: int, p: float, M: int = 4000) -> float:
    """kappa + A_ell(h) = 8 sum (m n - min(m,h) min(n,ell)) (m^2+n^2)^(-p/2) > 0.

    Summed directly (all terms are non-negative) so the small difference is
    accurate; the omitted range max(m,n) > M adds at most 8 * _quadrant_tail.
    """
    m = np.arange(1, M + 1, dtype=float)
    total = 0.0
    for i in range(0, M, 512):
        mi = m[i:i + 512, None]
        f = (mi ** 2 + m[None, :] ** 2) ** (-0.5 * p)
        g = mi * m[None, :] - np.minimum(mi, h) * np.minimum(m[None, :], ell)
        total += float(np.sum(g * f))
    return 8.0 * total


@lru_cache(maxsize=None)
def corner_kappa_direct(p: float, M: int = 4000) -> tuple[float, float]:
    """kappa = 8 sum_{m,n >= 1} m n (m^2+n^2)^(-p/2) by direct summation plus tail bound."""
    m = np.arange(1, M + 1, dtype=float)
    total = 0.0
    for i in range(0, M, 512):
        mi = m[i:i + 512, None]
        total += float(np.sum(mi * m[None, :] * (mi ** 2 + m[None, :] ** 2) ** (-0.5 * p)))
    tail = 8.0 * _quadrant_tail(p, M)
    return 8.0 * total, tail


@dataclass
class KappaReport:
    kappa: float
    error: float
    estimates: list[float]
    hs: list[int]
    deficits: list[float]
    slope: float
    stable: bool
    positive: bool


def corner_energy_kappa(params: ModelParams, h_range=(8, 16, 32, 64), ell_range=None,
                        tol: float = 1e-10) -> KappaReport:
    """Estimate kappa by Richardson extrapolation of A_ell(h) along h = ell.

    A_ell(h) = -kappa + c h^(4-p) + ...; consecutive pairs (h, 2h) eliminate the
    leading correction.  The estimates are compared with the direct sum.
    """
    p = params.p
    hs = list(h_range)
    ells = list(ell_range) if ell_range is not None else hs
    if any(h > l for h, l in zip(hs, ells)):
        raise ValueError("corner energy needs h <= ell")
    kap, kerr = corner_kappa_direct(float(p))
    deficits = [corner_deficit(h, l, p) for h, l in zip(hs, ells)]
    A = [d - kap for d in deficits]
    fac = 2.0 ** (p - 4.0)
    est = [-(fac * A[i + 1] - A[i]) / (fac - 1.0) for i in range(len(A) - 1)]
    slope = float(np.polyfit(np.log(hs), np.log(deficits), 1)[0])
    stable = all(abs(est[i + 1] - est[i]) <= 0.01 * abs(est[i]) for i in range(len(est) - 1))
    return KappaReport(kap, kerr, est, hs, deficits, slope, stable,
                       kap > 0 and all(e > 0 for e in est))


def ring_energy(spins: np.ndarray, kernel: np.ndarray, J: float) -> float:
    """-J sum (s_x s_{x+1} - 1) + sum_{x<y} k(y-x)(s_x s_y - 1) on a ring.

    kernel[r] is the (already periodized) coupling at ring distance r, r=1..N-1.
    """
    s = np.asarray(spins, dtype=float)
    N = len(s)
    f = np.fft.rfft(s)
    corr = np.rint(np.fft.irfft(f * np.conj(f), n=N))  # C(r) = sum_x s_x s_{x+r}
    walls = int(np.sum(s != np.roll(s, -1)))
    return 2.0 * J * walls + 0.5 * math.fsum(kernel[1:] * (corr[1:] - N))


def ring_phi_kernel(N: int, ell: int, params: ModelParams) -> np.ndarray:
    if N % 2:
        raise ValueError("ring length must be even (2L)")
    k = np.zeros(N)
    k[1:] = quasi1d_kernel(np.arange(1, N), ell, N // 2, params)
    return k


def chessboard_check(profile: StripeProfile, ell: int, params: ModelParams,
                     ring_length: int | None = None, tol: float = 1e-10,
                     instance_id: str = "") -> BoundReport:
    """Ring energy under phi_ell versus the sum of block energies h_i ebar(h_i)."""
    N = profile.length
    if ring_length is not None and ring_length != N:
        raise ValueError(f"profile covers {N} sites, ring has {ring_length}")
    if len(profile) % 2:
        raise ValueError("an alternating profile on a ring needs an even block count")
    lhs = ring_energy(profile.signs(), ring_phi_kernel(N, ell, params), params.J)
    rhs = 0.0
    err = 0.0
    for h in profile.widths:
        c = block_energy_per_site(h, ell, params, tol)
        rhs += h * c.value
        err += h * c.error
    slack = err + 1e-12 * (abs(lhs) + abs(rhs)) + N * 1e-12
    return BoundReport("chessboard", lhs, rhs, slack, instance_id=instance_id)


def stripe_box_energy(widths, ell: int, params: ModelParams, tol: float = 1e-10) -> float:
    """E_Q of vertical stripes in an ell x ell box with plus on both sides.

    widths = (h_1, ..., h_{2k-1}) alternate minus/plus starting with a minus
    stripe; each stripe spans the box height.
    """
    widths = [int(w) for w in widths]
    if len(widths) % 2 == 0:
        raise ValueError("need an odd number of widths (minus, plus, ..., minus)")
    if sum(widths) > ell:
        raise ValueError("stripes do not fit in the box")
    starts = np.concatenate([[0], np.cumsum(widths)[:-1]])
    minus = [(int(starts[i]), widths[i]) for i in range(0, len(widths), 2)]
    k = len(minus)
    F, _ = facing_sum(np.array([w for _, w in minus], dtype=float), params.p, 2, tol)
    e = 4.0 * params.J * k * ell - 2.0 * ell * math.fsum(F)
    for i in range(k):
        for j in range(i + 1, k):
            xi = np.arange(minus[i][0], minus[i][0] + minus[i][1])
            xj = np.arange(minus[j][0], minus[j][0] + minus[j][1])
            diff = (xj[None, :] - xi[:, None]).ravel()
            e += 4.0 * ell * math.fsum(quasi1d_kernel(diff, ell, None, params))
    return e


def localized_stripe_bound(widths, ell: int, params: ModelParams, C: float | None = None,
                           tol: float = 1e-10, instance_id: str = "") -> BoundReport:
    """E_Q versus ell sum_i h_i [e_s(h_i) - C h_i^(3-p)/ell] + tau ell - C ell^(4-p).

    details['C_min'] is the smallest C >= 0 for which the inequality holds on
    this instance.  With C=None the report uses C_min (and so passes).
    """
    widths = [int(w) for w in widths]
    if not widths:
        return BoundReport("localized_stripe", 0.0, 0.0, instance_id=instance_id,
                           details={"C_min": 0.0})
    p = params.p
    eq = stripe_box_energy(widths, ell, params, tol)
    base = ell * sum(h * stripe_energy_per_site(h, params, tol).value for h in widths)
    base += params.tau * ell
    scale = sum(float(h) ** (4.0 - p) for h in widths) + float(ell) ** (4.0 - p)
    c_min = max(0.0, (base - eq) / scale)
    use = c_min if C is None else C
    rhs = base - use * scale
    return BoundReport("localized_stripe", eq, rhs, 1e-9 * (1.0 + abs(eq)),
                       instance_id=instance_id, details={"C_min": c_min, "C": use})


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

def curve_to_csv(curve: StripeEnergyCurve, out=None) -> str:
    buf = io.StringIO()
    buf.write("# schema=1\n")
    buf.write(f"# h_star={curve.h_star} e_S={curve.e_star!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "e_s", "certificate"])
    for h, v, e in zip(curve.hs, curve.values, curve.errors):
        w.writerow([int(h), repr(float(v)), repr(float(e))])
    return _emit(buf.getvalue(), out)


def sweep_to_csv(rows, out=None) -> str:
    """rows: iterables of (tau, h_star, e_S, predicted_h_star, predicted_e_S)."""
    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "h_star", "e_S", "predicted_h_star", "predicted_e_S"])
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    return _emit(buf.getvalue(), out)


def _emit(text, out):
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
    return text
