"""Droplet representation of the energy and numerical certification of its lower bounds.

Under all-plus exterior conditions

    H = 2J sum_delta |Gamma(delta)| + sum_delta U(delta) + sum_{pairs} W(delta, delta')

with U(delta) = -2 sum_{x in delta, y not in delta} |x-y|^-p and
W = 4 sum_{x in delta, y in delta'} |x-y|^-p.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import droplet_geometry as dg
from .model_core import Certified, ModelParams, facing_sum, lattice_sum, shell_tail
from .spin_lattice import AllPlus, SpinConfiguration, kernel_convolve, total_energy


@dataclass
class EnergyBreakdown:
    contour_term: float
    self_energies: list[float]
    interactions: dict[tuple[int, int], float]
    error: float = 0.0
    droplets: list = field(default_factory=list, repr=False)

    @property
    def total(self) -> float:
        return (self.contour_term + math.fsum(self.self_energies)
                + math.fsum(self.interactions.values()))


@dataclass
class BoundReport:
    """lhs >= rhs is the claim; ``margin`` is lhs - rhs.

    passed is None when the check's precondition does not hold.
    """

    bound_name: str
    lhs: float
    rhs: float
    slack: float = 0.0
    passed: bool | None = None
    instance_id: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed is None and math.isfinite(self.lhs) and math.isfinite(self.rhs):
            self.passed = self.lhs >= self.rhs - self.slack

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def status(self) -> str:
        return "n/a" if self.passed is None else ("pass" if self.passed else "fail")


def not_applicable(name: str, instance_id: str = "", **details) -> BoundReport:
    return BoundReport(name, math.nan, math.nan, 0.0, None, instance_id, details)


def reports_to_csv(reports, out=None) -> str:
    """Write reports as CSV (``# schema=1`` header); returns the text."""
    buf = io.StringIO()
    buf.write("# schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bound_name", "instance_id", "lhs", "rhs", "margin", "pass"])
    for r in reports:
        w.writerow([r.bound_name, r.instance_id, repr(r.lhs), repr(r.rhs), repr(r.margin),
                    r.status])
    text = buf.getvalue()
    if out is not None:
        if hasattr(out, "write"):
            out.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
    return text


# ---------------------------------------------------------------------------
# pair sums
# ---------------------------------------------------------------------------

def cross_sum(sites_a: np.ndarray, sites_b: np.ndarray, p: float, chunk: int = 2048) -> float:
    """sum_{x in a, y in b, x != y} |x - y|^-p over explicit site lists."""
    a = np.asarray(sites_a, dtype=np.float64)
    b = np.asarray(sites_b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    parts = []
    for i in range(0, len(a), chunk):
        sq = ((a[i:i + chunk, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        with np.errstate(divide="ignore"):
            parts.append(np.where(sq > 0, sq ** (-0.5 * p), 0.0).sum())
    return math.fsum(parts)


def _inner_sum(mask: np.ndarray, p: float, tol: float) -> float:
    """sum over ordered pairs x != y in the mask of |x-y|^-p."""
    n = int(mask.sum())
    if n < 2:
        return 0.0
    if n <= 3000:
        s = np.argwhere(mask)
        return cross_sum(s, s, p)
    conv = kernel_convolve(mask.astype(float), mask.shape, (), p, tol)
    return math.fsum((conv * mask).ravel())


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------

def _require_plus(config: SpinConfiguration):
    if not isinstance(config.bc, AllPlus):
        raise ValueError("the droplet decomposition needs all-plus exterior conditions")


def self_energy(droplet: dg.Droplet, params: ModelParams, tol: float = 1e-10) -> Certified:
    """U = -2 |delta| S_p + 2 sum_{x != y in delta} |x-y|^-p."""
    if droplet.size == 0:
        raise ValueError("empty droplet")
    if droplet.d != params.d:
        raise ValueError("dimension mismatch")
    sp = lattice_sum(params.p, params.d, tol * 1e-2)
    inner = _inner_sum(droplet.mask, params.p, tol)
    val = -2.0 * droplet.size * sp.value + 2.0 * inner
    return Certified(val, 2.0 * droplet.size * sp.error + 1e-14 * abs(val))


def interaction(a: dg.Droplet, b: dg.Droplet, params: ModelParams) -> float:
    if a.mask.shape == b.mask.shape and np.any(a.mask & b.mask):
        raise ValueError("droplets overlap")
    return 4.0 * cross_sum(a.sites, b.sites, params.p)


def decompose(config: SpinConfiguration, params: ModelParams, tol: float = 1e-10) -> EnergyBreakdown:
    _require_plus(config)
    drops = dg.split_droplets(config)
    contour = 2.0 * params.J * sum(dr.contour_length for dr in drops)
    if not drops:
        return EnergyBreakdown(contour, [], {}, 0.0, drops)
    labels = np.zeros(config.geometry.dims, dtype=np.int64)
    for k, dr in enumerate(drops):
        labels[dr.mask] = k + 1
    sp = lattice_sum(params.p, params.d, tol * 1e-2)
    nd = len(drops)
    # block sums of the kernel between droplets: G[i, j] = sum_{x in i, y in j, x != y}
    G = np.zeros((nd, nd))
    nminus = int((labels > 0).sum())
    if nminus <= 3000:
        sites = np.argwhere(labels > 0)
        lab = labels[tuple(sites.T)] - 1
        for i in range(0, len(sites), 1024):
            sq = ((sites[i:i + 1024, None, :] - sites[None, :, :]) ** 2).sum(axis=-1)
            with np.errstate(divide="ignore"):
                K = np.where(sq > 0, sq.astype(float) ** (-0.5 * params.p), 0.0)
            li = lab[i:i + 1024]
            for j in range(nd):
                G[:, j] += np.bincount(li, weights=K[:, lab == j].sum(axis=1), minlength=nd)
    else:
        for j, dr in enumerate(drops):
            conv = kernel_convolve(dr.mask.astype(float), dr.mask.shape, (), params.p, tol)
            G[:, j] = np.bincount(labels.ravel(), weights=conv.ravel(), minlength=nd + 1)[1:]
    U = [-2.0 * dr.size * sp.value + 2.0 * G[k, k] for k, dr in enumerate(drops)]
    W = {(i, j): 2.0 * (G[i, j] + G[j, i]) for i in range(nd) for j in range(i + 1, nd)}
    err = 2.0 * nminus * sp.error
    return EnergyBreakdown(contour, U, W, err, drops)


# ---------------------------------------------------------------------------
# self-energy bounds
# ---------------------------------------------------------------------------

def _facing_total(dist: np.ndarray, params: ModelParams, tol: float, n_window: int | None):
    """sum_b F(d_b) with a certified upper error, by closed form or an n-window."""
    if len(dist) == 0:
        return 0.0, 0.0
    if n_window is None:
        vals, err = facing_sum(dist, params.p, params.d, tol)
        return math.fsum(vals), err * len(dist)
    # explicit window sum; the omitted shell is bounded using min(|n_i|, D) <= |n|
    W = int(n_window)
    rng = np.arange(-W, W + 1)
    grid = np.stack(np.meshgrid(*[rng] * params.d, indexing="ij"), axis=-1).reshape(-1, params.d)
    grid = grid[np.any(grid != 0, axis=1)]
    inv = (grid.astype(float) ** 2).sum(axis=1) ** (-0.5 * params.p)
    n1 = np.abs(grid[:, 0]).astype(float)
    total = 0.0
    for D in dist:
        total += float(np.sum(np.minimum(n1, D) * inv))
    tail = shell_tail(params.p - 1.0, params.d, W) * len(dist)
    # the window sum underestimates; the tail is added to the magnitude
    return total + tail, 1e-14 * total


def shadowed_pair_sum(droplet: dg.Droplet, p: float, radius_cap: float = math.inf) -> float:
    pairs = dg.shadowed_pairs(droplet, radius_cap)
    if len(pairs) == 0:
        return 0.0
    sq = ((pairs[:, 0] - pairs[:, 1]) ** 2).sum(axis=1).astype(float)
    return math.fsum(sq ** (-0.5 * p))


def self_energy_rhs(droplet: dg.Droplet, params: ModelParams, n_window: int | None = None,
                    tol: float = 1e-10, radius_cap: float | None = None) -> tuple[float, float]:
    """Right side of the self-energy bound and its certified error.

    The facing term's truncation is always charged against the bound and the
    shadowed-pair term is only ever truncated (it is positive), so the value
    returned is a valid lower estimate of the exact right side up to ``error``.
    """
    dist = dg.facing_distances(droplet.mask, droplet.boundary, droplet.modes)
    if not np.all(np.isfinite(dist)):
        raise ValueError("facing distances must be finite (isolated droplet)")
    facing, ferr = _facing_total(dist, params, tol, n_window)
    if radius_cap is None:
        radius_cap = math.inf if droplet.size <= 400 else 16.0
    corners = dg.corner_count(droplet)
    pair = shadowed_pair_sum(droplet, params.p, radius_cap)
    rhs = -facing + 2.0 ** (1.0 - 0.5 * params.p) * corners + 4.0 * pair
    return rhs, ferr + 1e-14 * abs(rhs)


def self_energy_lower_bound(droplet: dg.Droplet, params: ModelParams, n_window: int | None = None,
                            tol: float = 1e-10, instance_id: str = "") -> BoundReport:
    U = self_energy(droplet, params, tol)
    rhs, rerr = self_energy_rhs(droplet, params, n_window, tol)
    return BoundReport("self_energy", U.value, rhs, U.error + rerr, instance_id=instance_id)


def crude_lower_bound(droplet: dg.Droplet, params: ModelParams, tol: float = 1e-10,
                      instance_id: str = "") -> BoundReport:
    """U >= -2 J_c |Gamma|; details record the intermediate bound and the chain check."""
    U = self_energy(droplet, params, tol)
    rhs29, rerr = self_energy_rhs(droplet, params, None, tol)
    crude = -2.0 * params.jc * droplet.contour_length
    chain_ok = rhs29 >= crude - rerr - 1e-12 * abs(crude)
    rep = BoundReport("crude_self_energy", U.value, crude, U.error + rerr, instance_id=instance_id,
                      details={"rhs_intermediate": rhs29, "chain_ok": bool(chain_ok)})
    rep.passed = bool(rep.passed and chain_ok)
    return rep


def self_energy_bound_margins(batch: dg.PolyominoBatch, params: ModelParams,
                              tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Batched self-energy bound on isolated 2D polyominoes: (U - RHS, slack) per item."""
    p = params.p
    w, h = batch.shape
    sp = lattice_sum(p, 2, tol * 1e-2)
    n0 = np.arange(-(w - 1), w)[:, None]
    n1 = np.arange(-(h - 1), h)[None, :]
    sq = (n0 ** 2 + n1 ** 2).astype(float)
    with np.errstate(divide="ignore"):
        K = np.where(sq > 0, sq ** (-0.5 * p), 0.0)
    inner = np.einsum("bij,ij->b", batch.autocorr.astype(float), K)
    U = -2.0 * batch.sizes * sp.value + 2.0 * inner
    kmax = batch.facing_hist.shape[2] - 1
    F, ferr = facing_sum(np.arange(kmax + 1), p, 2, tol)
    F[0] = 0.0
    facing = np.einsum("bik,k->b", batch.facing_hist.astype(float), F)
    off = batch.pair_offsets()
    pk = ((off.astype(float) ** 2).sum(axis=1)) ** (-0.5 * p)
    pair = batch.shadowed.astype(float) @ pk
    rhs = -facing + 2.0 ** (1.0 - 0.5 * p) * batch.corners + 4.0 * pair
    slack = (2.0 * batch.sizes * sp.error + ferr * batch.contour_lengths
             + 1e-13 * (np.abs(U) + np.abs(rhs)))
    return U - rhs, slack


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------

def local_self_energy(bubble: dg.Bubble, params: ModelParams, tol: float = 1e-10) -> tuple[float, float]:
    """U_Q: facing sum with localized distances plus the corner term."""
    F, err = facing_sum(bubble.local_facing, params.p, params.d, tol)
    val = -math.fsum(F) + 2.0 ** (1.0 - 0.5 * params.p) * bubble.corner_count
    return val, err * len(F)


def localized_energy(config: SpinConfiguration, ell: int, params: ModelParams,
                     tol: float = 1e-10, instance_id: str = ""):
    """Per-box local energies E_Q and the report for H >= sum_Q E_Q."""
    _require_plus(config)
    boxes = dg.localize(config, ell)
    energies = {}
    err = 0.0
    for box, bubbles in boxes.items():
        e = 0.0
        for b in bubbles:
            u, ue = local_self_energy(b, params, tol)
            e += 2.0 * params.J * b.contour_length + u
            err += ue
        for i in range(len(bubbles)):
            for j in range(i + 1, len(bubbles)):
                e += 4.0 * cross_sum(bubbles[i].sites, bubbles[j].sites, params.p)
        energies[box] = e
    H = total_energy(config, params, tol)
    rhs = math.fsum(energies.values())
    rep = BoundReport("localization", H.value, rhs, H.error + err + 1e-12 * (1 + abs(rhs)),
                      instance_id=instance_id)
    return energies, rep, boxes


def corner_length_report(bubble: dg.Bubble, ell: int, d: int = 2, instance_id: str = "") -> BoundReport:
    """|Gamma_bar| <= 2 ell^(d-1) + 2 ell N_c, reported as lhs = bound, rhs = length."""
    cap = 2 * ell ** (d - 1) + 2 * ell * bubble.corner_count
    return BoundReport("corner_length", float(cap), float(bubble.contour_length), 0.0,
                       instance_id=instance_id)


def corner_threshold_ok(params: ModelParams, ell: int) -> bool:
    if params.d == 2:
        return abs(params.tau) * ell < 2.0 ** (1.0 - 0.5 * params.p) / 4.0
    return ell < 2.0 ** (-0.5 - 0.25 * params.p) * abs(params.tau) ** -0.5


def corner_positivity_check(bubble: dg.Bubble, params: ModelParams, ell: int,
                            tol: float = 1e-10, instance_id: str = "") -> BoundReport:
    """2J |Gamma_bar| + U_Q >= 0 for corner-carrying bubbles in small enough boxes."""
    if bubble.corner_count < 1:
        return not_applicable("corner_positivity", instance_id, reason="no corners")
    if not corner_threshold_ok(params, ell):
        return not_applicable("corner_positivity", instance_id, reason="box too large for tau")
    u, err = local_self_energy(bubble, params, tol)
    return BoundReport("corner_positivity", 2.0 * params.J * bubble.contour_length + u, 0.0,
                       err, instance_id=instance_id)
