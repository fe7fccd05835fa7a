"""Ground-state search: exhaustive enumeration, striped-class optimisation on
rings, simulated annealing, and the window / ratio / corner-density studies
built on top of them.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numba
import numpy as np

from . import droplet_geometry as dg
from .model_core import ModelParams, periodized_potential
from .spin_lattice import (AllPlus, BoundaryCondition, BoxGeometry, Periodic, SpinConfiguration,
                           _conv_shape, _exterior_fields, _kernel_fft, _periodic_axes,
                           quadratic_model, random_configuration, total_energy)
from .stripe_analytics import (StripeProfile, block_energy_per_site, optimal_stripe,
                               ring_energy, ring_phi_kernel, stripe_energy_per_site)

EXHAUSTIVE_CAP = 24
RING_ENUMERATION_CAP = 24
_TIE_CAP = 1 << 16


@dataclass
class SearchResult:
    """Outcome of a ground-state search.

    Ring searches describe the optimum through ``profile`` / ``ring_spins``
    and leave ``best_configuration`` as None; ``profile`` is None when the
    homogeneous state wins.  ``lower_bound`` is set when the method provides
    one.
    """

    best_configuration: SpinConfiguration | None
    best_energy: float
    energy_per_site: float
    method: str
    seed: int | None
    iterations: int
    certificate: str  # "exact" or "heuristic"
    ties: tuple = ()
    profile: StripeProfile | None = None
    ring_spins: np.ndarray | None = None
    lower_bound: float | None = None

    def __post_init__(self):
        if self.certificate not in ("exact", "heuristic"):
            raise ValueError("certificate must be 'exact' or 'heuristic'")


# ---------------------------------------------------------------------------
# exhaustive enumeration (Gray code over a dense quadratic form)
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _gray_scan(W, f, e0, cutoff, cap):
    """Walk all 2^n states in Gray-code order starting from all +1.

    With cutoff = inf returns the minimum energy found.  Otherwise collects the
    Gray codes of states with energy <= cutoff (at most cap of them).
    """
    n = len(f)
    s = np.ones(n)
    h = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += W[i, j]
        h[i] = acc
    E = e0
    best = E
    hits = np.empty(cap, dtype=np.int64)
    nhit = 0
    if E <= cutoff:
        hits[0] = 0
        nhit = 1
    total = np.int64(1) << n
    for k in range(1, total):
        i = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            i += 1
        old = s[i]
        E += -2.0 * old * (h[i] + f[i])
        s[i] = -old
        for j in range(n):
            h[j] -= 2.0 * old * W[j, i]
        if E < best:
            best = E
        if E <= cutoff:
            if nhit < cap:
                hits[nhit] = k ^ (k >> 1)
            nhit += 1
    return best, hits[:min(nhit, cap)], nhit


def _code_to_spins(code: int, n: int) -> np.ndarray:
    bits = (code >> np.arange(n)) & 1
    return np.where(bits == 1, -1, 1).astype(np.int8)


def _enumerate_minima(W: np.ndarray, f: np.ndarray, c: np.ndarray):
    """Exact minimisers of E(s) = sum_{i<j} W_ij (s_i s_j - 1) + sum (f_i s_i - c_i)."""
    W = np.ascontiguousarray(W, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    n = len(f)
    e0 = float(f.sum() - c.sum())
    approx, _, _ = _gray_scan(W, f, e0, math.inf, 1)
    # running sums drift; take a generous window and re-evaluate exactly
    scale = float(np.abs(W).sum() + np.abs(f).sum() + np.abs(c).sum())
    window = 1e-9 * scale + 1e-9
    _, codes, count = _gray_scan(W, f, e0, approx + window, _TIE_CAP)
    if count > _TIE_CAP:
        raise RuntimeError("too many near-degenerate states to certify the minimum")
    states = np.array([_code_to_spins(int(k), n) for k in codes], dtype=float)
    pair = 0.5 * (np.einsum("ki,ij,kj->k", states, W, states) - W.sum())
    energies = pair + states @ f - c.sum()
    best = float(energies.min())
    tie_tol = 1e-10 * (1.0 + abs(best)) + 1e-12 * scale
    order = np.argsort(energies, kind="stable")
    ties = [states[k].astype(np.int8) for k in order if energies[k] <= best + tie_tol]
    return best, ties


def exhaustive_ground_state(geometry: BoxGeometry, bc: BoundaryCondition,
                            params: ModelParams, tol: float = 1e-10) -> SearchResult:
    """Global minimiser over all 2^|box| configurations (|box| <= 24)."""
    if geometry.volume > EXHAUSTIVE_CAP:
        raise ValueError(f"exhaustive search needs volume <= {EXHAUSTIVE_CAP}")
    if geometry.d != params.d:
        raise ValueError("geometry dimension does not match params.d")
    W, f, c = quadratic_model(geometry, bc, params, tol)
    best, ties = _enumerate_minima(W, f, c)
    configs = [SpinConfiguration(geometry, s.reshape(geometry.dims), bc) for s in ties]
    best = total_energy(configs[0], params, tol).value  # free of quadratic-form rounding
    return SearchResult(configs[0], best, best / geometry.volume, "exhaustive", None,
                        2 ** geometry.volume, "exact", tuple(configs[1:]))


# ---------------------------------------------------------------------------
# striped class on a ring
# ---------------------------------------------------------------------------

def ring_kernel(N: int, params: ModelParams, kernel: str = "v", ell: int | None = None) -> np.ndarray:
    """Periodised coupling k[r], r = 0..N-1 (k[0] = 0), for the chosen kernel."""
    if kernel == "v":
        k = np.zeros(N)
        if N > 1:
            k[1:] = periodized_potential(np.arange(1, N), N, params.p, params.d)
        return k
    if kernel == "phi":
        if ell is None:
            raise ValueError("the phi kernel needs ell")
        return ring_phi_kernel(N, ell, params)
    raise ValueError(f"unknown kernel {kernel!r}")


def _block_energies(N: int, params: ModelParams, kernel: str, ell: int | None):
    vals = np.empty(N + 1)
    errs = np.zeros(N + 1)
    vals[0] = math.inf
    for h in range(1, N + 1):
        c = (stripe_energy_per_site(h, params) if kernel == "v"
             else block_energy_per_site(h, ell, params))
        vals[h], errs[h] = c.value, c.error
    return vals, errs


def chessboard_lower_bound(N: int, ebar: np.ndarray) -> tuple[float, list[int]]:
    """min sum_i h_i ebar(h_i) over compositions of N into an even number of parts.

    The homogeneous state (energy 0) is included.  Returns the bound and an
    argmin composition ([] for homogeneous).
    """
    cost = np.full(N + 1, math.inf)
    cost[1:] = np.arange(1, N + 1) * ebar[1:N + 1]
    # best[parity][n]: minimum over compositions of n with that parity of parts
    best = np.full((2, N + 1), math.inf)
    arg = np.zeros((2, N + 1), dtype=np.int64)
    best[0, 0] = 0.0
    for n in range(1, N + 1):
        for par in (0, 1):
            cand = best[1 - par, :n][::-1] + cost[1:n + 1]  # last block of width 1..n
            k = int(np.argmin(cand))
            best[par, n], arg[par, n] = cand[k], k + 1
    widths = []
    n, par = N, 0
    while n > 0:
        h = int(arg[par, n])
        widths.append(h)
        n, par = n - h, 1 - par
    if best[0, N] >= 0.0:
        return 0.0, []
    return float(best[0, N]), widths


def _near_equal(N: int, k: int) -> list[int]:
    cuts = [(i * N) // k for i in range(k + 1)]
    return [cuts[i + 1] - cuts[i] for i in range(k)]


def _profile_energy(widths, kern, J) -> float:
    if not widths:
        return 0.0
    return ring_energy(StripeProfile(tuple(widths)).signs(), kern, J)


def _local_search(widths, kern, J, energy):
    """Move single walls by one site while this lowers the ring energy."""
    widths = list(widths)
    improved = True
    evals = 0
    while improved and len(widths) >= 2:
        improved = False
        m = len(widths)
        for i in range(m):
            j = (i + 1) % m
            for step in (1, -1):
                a, b = widths[i] + step, widths[j] - step
                if a < 1 or b < 1:
                    continue
                trial = widths.copy()
                trial[i], trial[j] = a, b
                e = _profile_energy(trial, kern, J)
                evals += 1
                if e < energy - 1e-13 * (1.0 + abs(energy)):
                    widths, energy, improved = trial, e, True
    return widths, energy, evals


def _canonical_widths(spins: np.ndarray) -> list[int]:
    """Block widths of a ring configuration, starting at a minus block."""
    s = np.asarray(spins)
    N = len(s)
    walls = np.flatnonzero(s != np.roll(s, -1))
    if len(walls) == 0:
        return []
    starts = (walls + 1) % N
    starts = np.sort(starts)
    first = next(i for i, x in enumerate(starts) if s[x] < 0)
    starts = np.roll(starts, -first)
    return [int((starts[(i + 1) % len(starts)] - starts[i]) % N) or N for i in range(len(starts))]


def striped_optimum_on_ring(ring_length: int, params: ModelParams, kernel: str = "v",
                            ell: int | None = None,
                            enumerate_up_to: int = RING_ENUMERATION_CAP) -> SearchResult:
    """Minimum ring energy over alternating block profiles (the striped class).

    Rings up to ``enumerate_up_to`` (at most 24) sites are enumerated
    completely.  Longer rings combine the
    chessboard lower bound (an exact knapsack over block widths) with exact
    evaluation of near-equal profiles and wall-move descent; the result is
    certified exact when both bounds meet.
    """
    N = int(ring_length)
    if N < 2 or N % 2 or N > 512:
        raise ValueError("ring length must be even and in [2, 512]")
    kern = ring_kernel(N, params, kernel, ell)
    J = params.J
    tag = "ring-" + kernel
    if N <= min(enumerate_up_to, RING_ENUMERATION_CAP):
        idx = np.arange(N)
        W = kern[(idx[None, :] - idx[:, None]) % N].copy()
        nn = ((idx[None, :] - idx[:, None]) % N == 1) | ((idx[:, None] - idx[None, :]) % N == 1)
        W -= J * nn * (2.0 if N == 2 else 1.0)
        np.fill_diagonal(W, 0.0)
        best, ties = _enumerate_minima(W, np.zeros(N), np.zeros(N))
        best = ring_energy(ties[0], kern, J)
        widths = _canonical_widths(ties[0])
        prof = StripeProfile(tuple(widths)) if widths else None
        return SearchResult(None, best, best / N, tag + "-enumeration", None, 2 ** N, "exact",
                            tuple(ties[1:]), prof, ties[0], best)
    ebar, eerr = _block_energies(N, params, kernel, ell)
    lb, lb_widths = chessboard_lower_bound(N, ebar)
    candidates = [[]] + [_near_equal(N, k) for k in range(2, N + 1, 2)]
    if lb_widths:
        candidates.append(lb_widths)
    energies = [_profile_energy(w, kern, J) for w in candidates]
    order = np.argsort(energies, kind="stable")
    best_w, best_e = candidates[order[0]], energies[order[0]]
    evals = len(candidates)
    for k in order[:3]:
        w, e, n = _local_search(candidates[k], kern, J, energies[k])
        evals += n
        if e < best_e:
            best_w, best_e = w, e
    slack = float(N * eerr.max()) + 1e-9 * (1.0 + abs(best_e))
    cert = "exact" if best_e - lb <= slack else "heuristic"
    prof = StripeProfile(tuple(best_w)) if best_w else None
    spins = prof.signs() if prof else np.ones(N, dtype=np.int8)
    return SearchResult(None, best_e, best_e / N, tag, None, evals, cert, (), prof, spins, lb)


# ---------------------------------------------------------------------------
# simulated annealing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnealSchedule:
    """Temperature T_k = initial * decay^k at sweep k, for ``sweeps`` sweeps."""

    initial: float = 0.15
    decay: float = 0.2 ** (1.0 / 2000)
    sweeps: int = 2000

    def __post_init__(self):
        if self.initial <= 0 or not 0 < self.decay <= 1 or self.sweeps < 0:
            raise ValueError("bad annealing schedule")

    @property
    def final(self) -> float:
        return self.initial * self.decay ** max(self.sweeps - 1, 0)


@numba.njit(cache=True, nogil=True)
def _flip(i, old, g, coords, dims, periodic, off, kval):
    """g_j -= 2 old K(x_j - x_i) for every offset in the table."""
    x0, x1, x2 = coords[i, 0], coords[i, 1], coords[i, 2]
    n1, n2 = dims[1], dims[2]
    for t in range(len(kval)):
        y0 = x0 + off[t, 0]
        y1 = x1 + off[t, 1]
        y2 = x2 + off[t, 2]
        if periodic[0]:
            y0 %= dims[0]
        elif y0 < 0 or y0 >= dims[0]:
            continue
        if periodic[1]:
            y1 %= n1
        elif y1 < 0 or y1 >= n1:
            continue
        if periodic[2]:
            y2 %= n2
        elif y2 < 0 or y2 >= n2:
            continue
        g[(y0 * n1 + y1) * n2 + y2] -= 2.0 * old * kval[t]


@numba.njit(cache=True, nogil=True)
def _try_set(P, loc, KS, s, g, coords, dims, periodic, off, kval, T, r):
    """Propose flipping the plane sites P[loc]; KS holds the in-plane couplings."""
    lin = 0.0
    quad = 0.0
    for a in range(len(loc)):
        i = P[loc[a]]
        lin += s[i] * g[i]
        row = 0.0
        for b in range(len(loc)):
            row += KS[loc[a], loc[b]] * s[P[loc[b]]]
        quad += s[i] * row
    dE = -2.0 * lin + 2.0 * quad
    if dE < -1e-12 or (T > 0.0 and r < math.exp(-dE / T)):
        for a in range(len(loc)):
            i = P[loc[a]]
            old = s[i]
            s[i] = -old
            _flip(i, old, g, coords, dims, periodic, off, kval)
        return 1
    return 0


@numba.njit(cache=True, nogil=True)
def _sweep(s, g, coords, dims, periodic, off, kval, order, rand, plane_sites, plane_ptr,
           plane_axis, plane_K, plane_shape, segments, T, whole_planes):
    """One Metropolis sweep: single flips, one proposal per whole plane (if
    ``whole_planes``), then the given plane segments (rows: plane, start1,
    len1, start2, len2).

    Local fields are g_i = sum_j K_ij s_j + f_i; flipping a set S changes the
    energy by -2 sum_{i in S} s_i g_i + 2 s_S^T K_SS s_S.  T = 0 accepts only
    strict decreases.  Returns the number of accepted moves.
    """
    accepted = 0
    for k in range(len(order)):
        i = order[k]
        dE = -2.0 * s[i] * g[i]
        if dE < -1e-12 or (T > 0.0 and rand[k] < math.exp(-dE / T)):
            old = s[i]
            s[i] = -old
            _flip(i, old, g, coords, dims, periodic, off, kval)
            accepted += 1
    base = len(order)
    nplanes = len(plane_ptr) - 1 if whole_planes else 0
    for q in range(nplanes):
        P = plane_sites[plane_ptr[q]:plane_ptr[q + 1]]
        loc = np.arange(len(P))
        accepted += _try_set(P, loc, plane_K[plane_axis[q]], s, g, coords, dims, periodic,
                             off, kval, T, rand[base + q])
    base += nplanes
    for m in range(len(segments)):
        q = segments[m, 0]
        ax = plane_axis[q]
        p1 = plane_shape[ax, 0]
        p2 = plane_shape[ax, 1]
        k1 = segments[m, 2]
        k2 = segments[m, 4]
        loc = np.empty(k1 * k2, dtype=np.int64)
        for t1 in range(k1):
            for t2 in range(k2):
                loc[t1 * k2 + t2] = ((segments[m, 1] + t1) % p1) * p2 + (segments[m, 3] + t2) % p2
        P = plane_sites[plane_ptr[q]:plane_ptr[q + 1]]
        accepted += _try_set(P, loc, plane_K[ax], s, g, coords, dims, periodic,
                             off, kval, T, rand[base + m])
    return accepted


@numba.njit(cache=True, nogil=True)
def _wall_segments(s, dims, periodic, cand, count):
    """Plane segments that shift a straight piece of domain wall by one site.

    Each candidate row (site, normal axis a, direction bit, extension choice)
    is kept when the site's neighbour along +-e_a has the other sign; the
    piece is then grown along an in-plane axis b while the wall continues.
    Flipping it moves that piece of wall across the site.  Rows follow the
    segment layout (plane, start1, len1, start2, len2).
    """
    d = len(dims)
    stride = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        stride[k] = stride[k + 1] * dims[k + 1]
    offset = np.zeros(d, dtype=np.int64)
    for k in range(1, d):
        offset[k] = offset[k - 1] + dims[k - 1]
    out = np.zeros((count, 5), dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    rest = np.empty(d - 1, dtype=np.int64)
    k = 0
    for t in range(len(cand)):
        if k == count:
            break
        i = cand[t, 0]
        a = cand[t, 1]
        step = 1 if cand[t, 2] == 1 else -1
        for j in range(d):
            x[j] = (i // stride[j]) % dims[j]
        na = x[a] + step
        if periodic[a]:
            na %= dims[a]
        elif na < 0 or na >= dims[a]:
            continue
        s0 = s[i]
        if s[i + (na - x[a]) * stride[a]] == s0:
            continue
        r = 0
        for j in range(d):
            if j != a:
                rest[r] = j
                r += 1
        jb = cand[t, 3] % (d - 1)
        b = rest[jb]
        nb = dims[b]
        ext = np.zeros(2, dtype=np.int64)
        for side in range(2):
            sgn = -1 if side == 0 else 1
            while ext[0] + ext[1] < nb - 1:
                for j in range(d):
                    y[j] = x[j]
                v = x[b] + sgn * (ext[side] + 1)
                if periodic[b]:
                    v %= nb
                elif v < 0 or v >= nb:
                    break
                y[b] = v
                u = 0
                for j in range(d):
                    u += y[j] * stride[j]
                if s[u] != s0 or s[u + (na - x[a]) * stride[a]] == s0:
                    break
                ext[side] += 1
        start = x[b] - ext[0]
        if periodic[b]:
            start %= nb
        out[k, 0] = offset[a] + x[a]
        for slot in range(2):
            if slot < d - 1 and rest[slot] == b:
                out[k, 1 + 2 * slot] = start
                out[k, 2 + 2 * slot] = ext[0] + ext[1] + 1
            elif slot < d - 1:
                out[k, 1 + 2 * slot] = x[rest[slot]]
                out[k, 2 + 2 * slot] = 1
            else:
                out[k, 1 + 2 * slot] = 0
                out[k, 2 + 2 * slot] = 1
        k += 1
    return out[:k]


@numba.njit(cache=True, nogil=True)
def _slab_moves(s, dims, periodic, cand, count):
    """Site sets that open a new stripe parallel to a straight piece of wall.

    Candidate rows are (site, normal axis a, direction bit, extension choice,
    set-back, thickness).  As in ``_wall_segments`` the site must face the
    other sign along +-e_a and the piece is grown along an in-plane axis b;
    the slab then covers the planes set back 0..thickness-1 sites further
    into the site's own domain, over the same extent.  Returns (sites, ptr).
    """
    d = len(dims)
    stride = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        stride[k] = stride[k + 1] * dims[k + 1]
    sites = np.empty(0, dtype=np.int64)
    chunks = []
    ptr = np.zeros(count + 1, dtype=np.int64)
    x = np.empty(d, dtype=np.int64)
    y = np.empty(d, dtype=np.int64)
    k = 0
    for t in range(len(cand)):
        if k == count:
            break
        i = cand[t, 0]
        a = cand[t, 1]
        step = 1 if cand[t, 2] == 1 else -1
        for j in range(d):
            x[j] = (i // stride[j]) % dims[j]
        na = x[a] + step
        if periodic[a]:
            na %= dims[a]
        elif na < 0 or na >= dims[a]:
            continue
        s0 = s[i]
        if s[i + (na - x[a]) * stride[a]] == s0:
            continue
        b = cand[t, 3] % (d - 1)
        if b >= a:
            b += 1
        nb = dims[b]
        lo = 0
        hi = 0
        for side in range(2):
            sgn = -1 if side == 0 else 1
            while lo + hi < nb - 1:
                ext = hi if side else lo
                for j in range(d):
                    y[j] = x[j]
                v = x[b] + sgn * (ext + 1)
                if periodic[b]:
                    v %= nb
                elif v < 0 or v >= nb:
                    break
                y[b] = v
                u = 0
                for j in range(d):
                    u += y[j] * stride[j]
                if s[u] != s0 or s[u + (na - x[a]) * stride[a]] == s0:
                    break
                if side:
                    hi += 1
                else:
                    lo += 1
        back = cand[t, 4]
        thick = cand[t, 5]
        block = np.empty(thick * (lo + hi + 1), dtype=np.int64)
        m = 0
        for layer in range(thick):
            c = x[a] - step * (back + layer)
            if periodic[a]:
                c %= dims[a]
            elif c < 0 or c >= dims[a]:
                continue
            for e in range(-lo, hi + 1):
                for j in range(d):
                    y[j] = x[j]
                y[a] = c
                v = x[b] + e
                if periodic[b]:
                    v %= nb
                y[b] = v
                u = 0
                for j in range(d):
                    u += y[j] * stride[j]
                block[m] = u
                m += 1
        if m == 0:
            continue
        chunks.append(block[:m])
        ptr[k + 1] = ptr[k] + m
        k += 1
    sites = np.empty(ptr[k], dtype=np.int64)
    for c in range(k):
        sites[ptr[c]:ptr[c + 1]] = chunks[c]
    return sites, ptr[:k + 1]


@numba.njit(cache=True, nogil=True)
def _sweep_sets(s, g, coords, dims, periodic, off, kval, sites, ptr, rand, mark, T):
    """Metropolis proposals flipping each set sites[ptr[m]:ptr[m+1]].

    Couplings inside a set are taken from the offset table, so they are
    exact within its range.  ``mark`` is a zeroed scratch array of box size.
    """
    accepted = 0
    n1, n2 = dims[1], dims[2]
    for m in range(len(ptr) - 1):
        S = sites[ptr[m]:ptr[m + 1]]
        for i in S:
            mark[i] = 1
        lin = 0.0
        quad = 0.0
        for i in S:
            lin += s[i] * g[i]
            x0, x1, x2 = coords[i, 0], coords[i, 1], coords[i, 2]
            row = 0.0
            for t in range(len(kval)):
                y0 = x0 + off[t, 0]
                y1 = x1 + off[t, 1]
                y2 = x2 + off[t, 2]
                if periodic[0]:
                    y0 %= dims[0]
                elif y0 < 0 or y0 >= dims[0]:
                    continue
                if periodic[1]:
                    y1 %= n1
                elif y1 < 0 or y1 >= n1:
                    continue
                if periodic[2]:
                    y2 %= n2
                elif y2 < 0 or y2 >= n2:
                    continue
                j = (y0 * n1 + y1) * n2 + y2
                if mark[j]:
                    row += kval[t] * s[j]
            quad += s[i] * row
        for i in S:
            mark[i] = 0
        dE = -2.0 * lin + 2.0 * quad
        if dE < -1e-12 or (T > 0.0 and rand[m] < math.exp(-dE / T)):
            for i in S:
                old = s[i]
                s[i] = -old
                _flip(i, old, g, coords, dims, periodic, off, kval)
            accepted += 1
    return accepted


class _Annealer:
    """Precomputed couplings, offset tables and plane data for one box."""

    def __init__(self, geometry, bc, params, tol, radius, plane_moves):
        dims = geometry.dims
        d = len(dims)
        per = _periodic_axes(bc)
        _, K, _ = _kernel_fft(dims, per, float(params.p), float(tol))
        K = K.copy()
        shape = K.shape
        for a in range(d):
            for step in (1, -1):
                idx = [0] * d
                idx[a] = step % shape[a]
                if any(idx):
                    K[tuple(idx)] -= params.J
        K.flat[0] = 0.0
        self.K, self.kf, self.dims, self.shape, self.per = K, np.fft.rfftn(K), dims, shape, per
        pad = 3 - d
        self.dims3 = np.array((1,) * pad + dims, dtype=np.int64)
        self.periodic3 = np.array([False] * pad + [a in per for a in range(d)], dtype=np.bool_)
        self.coords = np.array(np.unravel_index(np.arange(geometry.volume), self.dims3)).T.copy()
        self.local = self._offsets(radius)
        self.full = self._offsets(math.inf)
        if plane_moves:
            idx = np.arange(geometry.volume).reshape(dims)
            groups, axes = [], []
            for a in range(d):
                for c in range(dims[a]):
                    groups.append(np.take(idx, c, axis=a).ravel())
                    axes.append(a)
            self.plane_sites = np.concatenate(groups).astype(np.int64)
            self.plane_ptr = np.concatenate([[0], np.cumsum([len(g) for g in groups])]).astype(np.int64)
            self.plane_axis = np.array(axes, dtype=np.int64)
            size = max(len(g) for g in groups)
            self.plane_shape = np.ones((d, 2), dtype=np.int64)
            self.plane_wrap = np.zeros((d, 2), dtype=np.bool_)
            for a in range(d):
                rest = [k for k in range(d) if k != a]
                for j, k in enumerate(rest):
                    self.plane_shape[a, j] = dims[k]
                    self.plane_wrap[a, j] = k in per
            self.plane_K = np.zeros((d, size, size))
            for a in range(d):
                pts = np.array(np.unravel_index(np.take(idx, 0, axis=a).ravel(), dims)).T
                diff = pts[None, :, :] - pts[:, None, :]
                m = len(pts)
                self.plane_K[a, :m, :m] = K[tuple(np.mod(diff[..., k], shape[k]) for k in range(d))]
        else:
            self.plane_sites = np.zeros(0, np.int64)
            self.plane_ptr = np.zeros(1, np.int64)
            self.plane_axis = np.zeros(0, np.int64)
            self.plane_K = np.zeros((1, 1, 1))
            self.plane_shape = np.ones((1, 2), dtype=np.int64)
            self.plane_wrap = np.zeros((1, 2), dtype=np.bool_)

    def _offsets(self, radius):
        """Offsets reaching each site of the box at most once, within ``radius``."""
        ranges = []
        for a, n in enumerate(self.dims):
            r = n - 1 if math.isinf(radius) else min(int(radius), n - 1)
            if a in self.per:
                ranges.append(np.arange(n) if 2 * r + 1 >= n else np.arange(-r, r + 1))
            else:
                ranges.append(np.arange(-r, r + 1))
        grid = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(len(self.dims), -1).T
        kval = self.K[tuple(np.mod(grid[:, k], self.shape[k]) for k in range(len(self.dims)))]
        keep = kval != 0.0
        off = np.zeros((int(keep.sum()), 3), dtype=np.int64)
        off[:, 3 - len(self.dims):] = grid[keep]
        return off, np.ascontiguousarray(kval[keep])

    def fields(self, s, f):
        axes = tuple(range(len(self.shape)))
        conv = np.fft.irfftn(np.fft.rfftn(s.reshape(self.dims), s=self.shape, axes=axes) * self.kf,
                             s=self.shape, axes=axes)
        return conv[tuple(slice(0, n) for n in self.dims)].ravel() + f

    def random_segments(self, rng, count):
        """Random contiguous pieces of planes (segments of rows/columns in 2D)."""
        if count == 0 or len(self.plane_axis) == 0:
            return np.zeros((0, 5), dtype=np.int64)
        q = rng.integers(0, len(self.plane_axis), count)
        ax = self.plane_axis[q]
        out = np.zeros((count, 5), dtype=np.int64)
        out[:, 0] = q
        for j in range(2):
            p = self.plane_shape[ax, j]
            k = rng.integers(1, p + 1)
            wrap = self.plane_wrap[ax, j]
            u = np.where(wrap, rng.integers(0, p), (rng.random(count) * (p - k + 1)).astype(np.int64))
            out[:, 1 + 2 * j], out[:, 2 + 2 * j] = u, k
        return out

    def wall_segments(self, s, rng, count):
        """Straight wall pieces next to randomly picked domain-wall elements."""
        if count == 0 or len(self.plane_axis) == 0:
            return np.zeros((0, 5), dtype=np.int64)
        d = len(self.dims)
        m = 8 * count  # most random picks miss a wall
        cand = np.column_stack([rng.integers(0, len(s), m), rng.integers(0, d, m),
                                rng.integers(0, 2, m), rng.integers(0, max(d - 1, 1), m)])
        return _wall_segments(s, np.array(self.dims, dtype=np.int64),
                              np.array([a in self.per for a in range(d)]), cand, count)

    def slab_sets(self, s, rng, count, depth):
        """Flat site lists of slabs set back behind randomly found wall pieces."""
        d = len(self.dims)
        if count == 0 or d < 2:
            return np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
        m = 8 * count
        a = rng.integers(0, d, m)
        cap = np.maximum(np.array(self.dims)[a] // 2, 1)
        cand = np.column_stack([rng.integers(0, len(s), m), a, rng.integers(0, 2, m),
                                rng.integers(0, d - 1, m), rng.integers(0, 2 * depth + 1, m),
                                np.minimum(rng.integers(1, depth + 1, m), cap)])
        return _slab_moves(s, np.array(self.dims, dtype=np.int64),
                           np.array([k in self.per for k in range(d)]), cand, count)

    def sweep_sets(self, s, g, offsets, sets, rand, T):
        off, kval = offsets
        mark = np.zeros(len(s), dtype=np.int8)
        return _sweep_sets(s, g, self.coords, self.dims3, self.periodic3, off, kval,
                           sets[0], sets[1], rand, mark, T)

    def sweep(self, s, g, offsets, order, rand, T, segments=None, whole_planes=True):
        off, kval = offsets
        if segments is None:
            segments = np.zeros((0, 5), dtype=np.int64)
        return _sweep(s, g, self.coords, self.dims3, self.periodic3, off, kval, order, rand,
                      self.plane_sites, self.plane_ptr, self.plane_axis, self.plane_K,
                      self.plane_shape, segments, T, whole_planes)


def simulated_annealing(geometry: BoxGeometry, bc: BoundaryCondition, params: ModelParams,
                        schedule: AnnealSchedule = AnnealSchedule(), seed: int = 0,
                        initial: SpinConfiguration | None = None, plane_moves: bool = True,
                        segment_moves: int = 1, wall_moves: int = 1, slab_moves: int = 16,
                        slab_depth: int = 4, update_radius: int = 8,
                        tol: float = 1e-10) -> SearchResult:
    """Best-ever configuration of a seeded annealing run, followed by a quench.

    Proposals are single-site flips, flips of whole lattice planes (rows and
    columns in 2D) and, per plane and sweep, ``segment_moves`` flips of random
    contiguous pieces of a plane plus ``wall_moves`` flips of straight
    domain-wall pieces (which shift a wall by one site).  Each sweep also
    proposes ``slab_moves`` slabs parallel to a wall piece, set back up to
    2 * ``slab_depth`` sites and up to ``slab_depth`` thick, which open a new
    stripe inside an over-wide domain.  During a sweep the
    local fields are updated within ``update_radius`` only and are recomputed
    exactly after every sweep, so best-ever tracking uses exact energies.  The
    closing zero-temperature descent uses full-range updates.  The reported
    energy is recomputed from scratch.
    """
    if geometry.d != params.d:
        raise ValueError("geometry dimension does not match params.d")
    if initial is None:
        initial = random_configuration(geometry, bc, seed)
    ann = _Annealer(geometry, bc, params, tol, update_radius, plane_moves)
    if isinstance(bc, Periodic):
        f = np.zeros(geometry.volume)
    else:
        fe, _, _ = _exterior_fields(initial, params, tol)
        f = fe.ravel().astype(float)
    n = geometry.volume
    nplanes = len(ann.plane_ptr) - 1
    rng = np.random.default_rng(seed)
    s = initial.spins.astype(float).ravel().copy()

    def energy(x, g):  # energy up to a configuration-independent constant
        return 0.5 * float(x @ (g - f)) + float(f @ x)

    g = ann.fields(s, f)
    best_s, best_e = s.copy(), energy(s, g)
    accepted = 0
    T = schedule.initial
    nseg = nplanes * segment_moves
    nwall = nplanes * wall_moves
    nslab = slab_moves
    no_sites = np.zeros(0, dtype=np.int64)
    for _ in range(schedule.sweeps):
        order = rng.integers(0, n, n)
        segments = ann.random_segments(rng, nseg)
        rand = rng.random(n + nplanes + nseg)
        accepted += ann.sweep(s, g, ann.local, order, rand, T, segments)
        if nwall:
            walls = ann.wall_segments(s, rng, nwall)
            accepted += ann.sweep(s, g, ann.local, no_sites, rng.random(len(walls)), T, walls,
                                  whole_planes=False)
        if nslab:
            sets = ann.slab_sets(s, rng, nslab, slab_depth)
            accepted += ann.sweep_sets(s, g, ann.local, sets, rng.random(len(sets[1]) - 1), T)
        g = ann.fields(s, f)
        e = energy(s, g)
        if e < best_e:
            best_s, best_e = s.copy(), e
        T *= schedule.decay
    s = best_s
    g = ann.fields(s, f)
    seq = np.arange(n)
    dummy = np.zeros(n + nplanes)
    while True:
        k = ann.sweep(s, g, ann.full, seq, dummy, 0.0)
        if nwall:
            walls = ann.wall_segments(s, rng, nwall)
            k += ann.sweep(s, g, ann.full, no_sites, np.zeros(len(walls)), 0.0, walls,
                           whole_planes=False)
        if nslab:
            sets = ann.slab_sets(s, rng, nslab, slab_depth)
            k += ann.sweep_sets(s, g, ann.full, sets, np.zeros(len(sets[1]) - 1), 0.0)
        if not k:
            break
        accepted += k
    config = SpinConfiguration(geometry, s.reshape(geometry.dims).astype(np.int8), bc)
    E = total_energy(config, params, tol).value
    return SearchResult(config, E, E / n, "anneal", seed, int(accepted), "heuristic")


def best_of_annealing(geometry: BoxGeometry, bc: BoundaryCondition, params: ModelParams,
                      seeds, schedule: AnnealSchedule = AnnealSchedule(), **kw) -> SearchResult:
    """Lowest-energy result over seeds; ties broken by the smaller seed."""
    results = [simulated_annealing(geometry, bc, params, schedule, int(s), **kw) for s in seeds]
    return min(results, key=lambda r: (r.best_energy, r.seed))


# ---------------------------------------------------------------------------
# window survey, corner density, ratio study
# ---------------------------------------------------------------------------

@dataclass
class WindowReport:
    origin: tuple[int, ...]
    side: int
    is_striped: bool
    orientation: int | None  # axis along which the spins alternate
    widths: dict = field(default_factory=dict)
    corners: int = 0


@dataclass
class SurveyResult:
    reports: list
    striped_fraction: float
    width_histogram: dict


def _interior_corners(mask: np.ndarray) -> int:
    """Corners at dual vertices (2D) or edges (3D) strictly inside the window."""
    total = 0
    for a, b in dg._planes(mask.ndim):
        m = np.moveaxis(mask, (a, b), (0, 1)).astype(np.int64)
        code = m[:-1, :-1] + 2 * m[1:, :-1] + 4 * m[:-1, 1:] + 8 * m[1:, 1:]
        total += int(dg._WINDOW_CORNERS[code].sum())
    return total


def _inner_runs(line: np.ndarray) -> list[int]:
    """Lengths of constant runs that do not touch either end of the line."""
    cuts = np.flatnonzero(line[1:] != line[:-1]) + 1
    return [int(b - a) for a, b in zip(cuts[:-1], cuts[1:])]


def classify_window(spins: np.ndarray, origin=(), side: int | None = None) -> WindowReport:
    """Striped means no corner inside the window and all walls share one normal axis."""
    minus = spins < 0
    corners = _interior_corners(minus)
    normals = [a for a in range(spins.ndim)
               if np.any(np.diff(spins, axis=a) != 0)]
    striped = corners == 0 and len(normals) <= 1
    orientation = normals[0] if striped and normals else None
    widths = {}
    if orientation is not None:
        line = np.moveaxis(spins, orientation, 0).reshape(spins.shape[orientation], -1)[:, 0]
        widths = dict(Counter(_inner_runs(line)))
    return WindowReport(tuple(origin), side or spins.shape[0], striped, orientation, widths, corners)


def window_stripe_survey(config: SpinConfiguration, side: int, sample_count: int,
                         seed: int = 0) -> SurveyResult:
    """Classify ``sample_count`` uniformly placed windows of side ``side``.

    Periodic axes allow wrapped windows; along other axes the window stays
    inside the box.
    """
    dims = config.geometry.dims
    if side < 1 or side > min(dims):
        raise ValueError("window side must lie in [1, min box side]")
    periodic = _periodic_axes(config.bc)
    rng = np.random.default_rng(seed)
    reports = []
    hist = Counter()
    for _ in range(int(sample_count)):
        origin = tuple(int(rng.integers(0, n if a in periodic else n - side + 1))
                       for a, n in enumerate(dims))
        idx = np.ix_(*[np.arange(o, o + side) % n for o, n in zip(origin, dims)])
        rep = classify_window(config.spins[idx], origin, side)
        reports.append(rep)
        if rep.is_striped:
            hist.update(rep.widths)
    frac = sum(r.is_striped for r in reports) / max(len(reports), 1)
    return SurveyResult(reports, frac, dict(sorted(hist.items())))


def corner_density(config: SpinConfiguration) -> float:
    """Total corner count N_c divided by the number of sites."""
    return dg.total_corner_count(config) / config.geometry.volume


@dataclass
class RatioRow:
    tau: float
    e0: float
    e_S: float
    ratio: float
    method: str
    certificate: str


def ratio_study(taus, p: float, d: int, method: str = "dp", budget: int = 256,
                seeds=(0,), schedule: AnnealSchedule = AnnealSchedule()) -> list[RatioRow]:
    """e_0 estimates against the optimal stripe energy e_S along a sweep of tau.

    method: "dp" (ring of length ``budget``), "exhaustive" (periodic box with
    ``budget`` sites along one axis and 2 along the other, capped at 24 sites)
    or "anneal" (periodic budget x budget box, best over ``seeds``).
    """
    rows = []
    for tau in taus:
        params = ModelParams.from_tau(float(tau), p, d)
        _, e_S = optimal_stripe(params)
        if method == "dp":
            res = striped_optimum_on_ring(int(budget), params, "v")
        elif method == "exhaustive":
            dims = (int(budget), 2) if d == 2 else (int(budget), 2, 2)
            geom = BoxGeometry(dims)
            res = exhaustive_ground_state(geom, Periodic(tuple(range(d))), params)
        elif method == "anneal":
            geom = BoxGeometry((int(budget),) * d)
            res = best_of_annealing(geom, Periodic(tuple(range(d))), params, seeds, schedule)
        else:
            raise ValueError(f"unknown method {method!r}")
        e0 = res.energy_per_site
        ratio = 1.0 if tau >= 0 else e0 / e_S
        rows.append(RatioRow(float(tau), e0, e_S, ratio, method, res.certificate))
    return rows


def ratio_rows_to_csv(rows, out=None) -> str:
    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "e0", "e_S", "ratio", "method", "certificate"])
    for r in rows:
        w.writerow([repr(r.tau), repr(r.e0), repr(r.e_S), repr(r.ratio), r.method, r.certificate])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
