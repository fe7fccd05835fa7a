"""Finite-box spin configurations and the finite-volume Hamiltonian.

Energies are normalised so that every interaction enters through
(sigma sigma' - 1): the homogeneous state has energy zero.  Long-range sums
over the infinite exterior are reduced to the whole-lattice constant S_p
minus finite sums over the box (plus an optional explicit margin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .model_core import Certified, ModelParams, lattice_sum, shell_tail


@dataclass(frozen=True)
class BoxGeometry:
    dims: tuple[int, ...]
    origin: tuple[int, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (2, 3) or min(dims) < 1:
            raise ValueError(f"bad box dimensions {self.dims}")
        object.__setattr__(self, "dims", dims)
        origin = (0,) * len(dims) if self.origin is None else tuple(int(o) for o in self.origin)
        if len(origin) != len(dims):
            raise ValueError("origin and dims disagree in length")
        object.__setattr__(self, "origin", origin)

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def volume(self) -> int:
        return math.prod(self.dims)


class BoundaryCondition:
    """Base class of the boundary-condition variants."""


@dataclass(frozen=True)
class AllPlus(BoundaryCondition):
    pass


@dataclass(frozen=True)
class AllMinus(BoundaryCondition):
    pass


@dataclass(frozen=True)
class Periodic(BoundaryCondition):
    """Periodic along ``axes``; the remaining axes are open (no exterior)."""

    axes: tuple[int, ...] = (0,)

    def __post_init__(self):
        axes = tuple(sorted(int(a) for a in self.axes))
        if len(set(axes)) != len(axes) or not axes:
            raise ValueError("periodic axes must be distinct and non-empty")
        object.__setattr__(self, "axes", axes)


@dataclass(frozen=True)
class ExplicitExterior(BoundaryCondition):
    """Exterior spins given by ``rule`` within ``margin`` of the box, ``far_sign`` beyond.

    ``rule`` receives an integer array of absolute site coordinates with
    shape (..., d) and returns +1/-1 for each.
    """

    rule: Callable[[np.ndarray], np.ndarray]
    margin: int = 1
    far_sign: int = 1

    def __post_init__(self):
        if self.margin < 0 or self.far_sign not in (1, -1):
            raise ValueError("bad exterior specification")


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    geometry: BoxGeometry
    spins: np.ndarray
    bc: BoundaryCondition = field(default_factory=AllPlus)

    def __post_init__(self):
        spins = np.array(self.spins, dtype=np.int8)
        if spins.shape != self.geometry.dims:
            raise ValueError(f"spin array shape {spins.shape} != box {self.geometry.dims}")
        if not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be +1 or -1")
        if isinstance(self.bc, Periodic) and max(self.bc.axes) >= self.geometry.d:
            raise ValueError("periodic axis out of range")
        spins.setflags(write=False)
        object.__setattr__(self, "spins", spins)

    @property
    def d(self) -> int:
        return self.geometry.d

    @property
    def minus(self) -> np.ndarray:
        return self.spins < 0

    def flipped(self) -> "SpinConfiguration":
        """Global spin flip, with AllPlus and AllMinus exchanged."""
        bc = self.bc
        if isinstance(bc, AllPlus):
            bc = AllMinus()
        elif isinstance(bc, AllMinus):
            bc = AllPlus()
        elif isinstance(bc, ExplicitExterior):
            rule = bc.rule
            bc = ExplicitExterior(lambda xs: -np.asarray(rule(xs)), bc.margin, -bc.far_sign)
        return SpinConfiguration(self.geometry, -self.spins, bc)

    def with_spins(self, spins: np.ndarray) -> "SpinConfiguration":
        return SpinConfiguration(self.geometry, spins, self.bc)

    def __eq__(self, other):
        if not isinstance(other, SpinConfiguration):
            return NotImplemented
        return (self.geometry == other.geometry and self.bc == other.bc
                and np.array_equal(self.spins, other.spins))


# ---------------------------------------------------------------------------
# kernels on offset grids
# ---------------------------------------------------------------------------

def _conv_shape(dims, periodic):
    return tuple(n if a in periodic else 2 * n for a, n in enumerate(dims))


@lru_cache(maxsize=64)
def _kernel_fft(dims: tuple[int, ...], periodic: tuple[int, ...], p: float, tol: float):
    """FFT of the (image-summed) kernel |x|^-p on the convolution grid.

    Returns (kernel_fft, kernel_real, per_site_error).
    """
    d = len(dims)
    shape = _conv_shape(dims, periodic)
    axes = []
    for a, n in enumerate(dims):
        idx = np.arange(shape[a])
        if a in periodic:
            off = np.where(idx < (n + 1) // 2, idx, idx - n)  # minimum image
        else:
            off = np.where(idx < n, idx, idx - 2 * n)
        axes.append(off)
    grids = np.meshgrid(*axes, indexing="ij")
    err = 0.0
    if periodic:
        L = min(dims[a] for a in periodic)
        Q = 1
        while True:
            R = math.ceil((Q + 0.5) * L) - 1
            err = shell_tail(p, d, R) if R >= 1 else math.inf
            if err * max(1, math.prod(dims)) <= tol / 10 or Q > 50:
                break
            Q += 1
        image_ranges = [range(-Q, Q + 1) if a in periodic else range(0, 1) for a in range(d)]
    else:
        image_ranges = [range(0, 1)] * d
    K = np.zeros(shape)
    for shift in np.array(np.meshgrid(*image_ranges, indexing="ij")).reshape(d, -1).T:
        sq = np.zeros(shape)
        for a in range(d):
            sq = sq + (grids[a] + shift[a] * dims[a]).astype(float) ** 2
        with np.errstate(divide="ignore"):
            term = np.where(sq > 0, sq ** (-0.5 * p), 0.0)
        K += term
    return np.fft.rfftn(K), K, err


def kernel_convolve(field_arr: np.ndarray, dims, periodic, p, tol) -> np.ndarray:
    """(K * field)(x) = sum_y K(x - y) field(y) for x in the box."""
    kf, _, _ = _kernel_fft(tuple(dims), tuple(periodic), float(p), float(tol))
    shape = _conv_shape(dims, periodic)
    axes = tuple(range(len(shape)))
    out = np.fft.irfftn(np.fft.rfftn(field_arr, s=shape, axes=axes) * kf, s=shape, axes=axes)
    return out[tuple(slice(0, n) for n in dims)]


def _nn_disagreements(spins: np.ndarray, periodic=()) -> int:
    count = 0
    for a in range(spins.ndim):
        if a in periodic and spins.shape[a] > 1:
            nb = np.roll(spins, -1, axis=a)
            count += int(np.sum(spins != nb))
        else:
            s0 = np.moveaxis(spins, a, 0)
            count += int(np.sum(s0[1:] != s0[:-1]))
    return count


def _periodic_axes(bc) -> tuple[int, ...]:
    return bc.axes if isinstance(bc, Periodic) else ()


def _check(config: SpinConfiguration, params: ModelParams):
    if config.d != params.d:
        raise ValueError(f"configuration is {config.d}-dimensional but params.d={params.d}")


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------

def interior_energy(config: SpinConfiguration, params: ModelParams, tol: float = 1e-10) -> Certified:
    """Nearest-neighbour plus long-range terms over pairs inside the box."""
    _check(config, params)
    periodic = _periodic_axes(config.bc)
    nn = 2.0 * params.J * _nn_disagreements(config.spins, periodic)
    m = config.minus.astype(float)
    if m.sum() == 0 or m.sum() == m.size:
        return Certified(nn, 0.0)
    conv = kernel_convolve(1.0 - m, config.geometry.dims, periodic, params.p, tol)
    lr = -2.0 * math.fsum((m * conv).ravel())
    _, _, img_err = _kernel_fft(config.geometry.dims, periodic, float(params.p), float(tol))
    err = 2.0 * img_err * m.sum() + 1e-13 * abs(lr)
    return Certified(nn + lr, err)


def _exterior_fields(config: SpinConfiguration, params: ModelParams, tol: float):
    """Per-site sums over exterior y of w(x,y) sigma*_y and of w(x,y).

    w = |x-y|^-p - J [x,y nearest neighbours].  Open axes of a Periodic
    condition have no exterior, so both fields vanish there.
    """
    bc = config.bc
    dims = config.geometry.dims
    if isinstance(bc, Periodic):
        z = np.zeros(dims)
        return z, z, 0.0
    if isinstance(bc, ExplicitExterior):
        M, far, rule = bc.margin, bc.far_sign, bc.rule
    else:
        M, far, rule = 0, (1 if isinstance(bc, AllPlus) else -1), None
    sp = lattice_sum(params.p, params.d, tol * 1e-2)
    # margin of at least one layer so that nearest neighbours are explicit
    P = max(M, 1)
    pdims = tuple(n + 2 * P for n in dims)
    inner = tuple(slice(P, P + n) for n in dims)
    box = np.zeros(pdims)
    box[inner] = 1.0
    if M:
        axes = [np.arange(n) - P + o for n, o in zip(pdims, config.geometry.origin)]
        coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        ext = np.asarray(rule(coords), dtype=float)
        if ext.shape != pdims or not np.all(np.abs(ext) == 1):
            raise ValueError("exterior rule must return +1/-1 per site")
        if M < P:
            ext[...] = far
    else:
        ext = np.full(pdims, float(far))
    ext[inner] = 0.0
    near = ext.copy()
    if M < P:
        near[...] = 0.0  # with no margin every exterior site is "far"
    lr_field = (kernel_convolve(near, pdims, (), params.p, tol)[inner]
                + far * (sp.value - kernel_convolve(box + np.abs(near), pdims, (), params.p, tol)[inner]))
    lr_weight = sp.value - kernel_convolve(box, pdims, (), params.p, tol)[inner]
    nn_field = np.zeros(dims)
    for a in range(len(dims)):
        for step in (-1, 1):
            nn_field += np.roll(ext, step, axis=a)[inner]
    nn_count = 2 * len(dims) - sum(
        np.roll(box, step, axis=a)[inner] for a in range(len(dims)) for step in (-1, 1))
    err = sp.error * config.geometry.volume + 1e-13 * np.abs(lr_weight).sum()
    return lr_field - params.J * nn_field, lr_weight - params.J * nn_count, err


def boundary_term(config: SpinConfiguration, params: ModelParams, tol: float = 1e-10) -> Certified:
    """B_Lambda: interactions between the box and the exterior condition."""
    _check(config, params)
    f, w, err = _exterior_fields(config, params, tol)
    s = config.spins.astype(float)
    val = math.fsum((s * f - w).ravel())
    return Certified(val, err)


def total_energy(config: SpinConfiguration, params: ModelParams, tol: float = 1e-10) -> Certified:
    """H_Lambda(sigma) = interior terms + boundary term."""
    a = interior_energy(config, params, tol)
    b = boundary_term(config, params, tol)
    return Certified(a.value + b.value, a.error + b.error)


def quadratic_model(geometry: BoxGeometry, bc: BoundaryCondition, params: ModelParams,
                    tol: float = 1e-10):
    """Dense form E(s) = sum_{i<j} W_ij (s_i s_j - 1) + sum_i (f_i s_i - c_i).

    Sites are in C order of the box array.  Intended for small boxes.
    """
    if geometry.volume > 4096:
        raise ValueError("dense model only for volume <= 4096")
    dims = geometry.dims
    periodic = _periodic_axes(bc)
    _, K, _ = _kernel_fft(dims, periodic, float(params.p), float(tol))
    shape = _conv_shape(dims, periodic)
    coords = np.array(np.unravel_index(np.arange(geometry.volume), dims)).T
    diff = coords[:, None, :] - coords[None, :, :]
    idx = tuple(np.mod(diff[..., a], shape[a]) for a in range(len(dims)))
    W = K[idx].copy()
    # nearest-neighbour couplings
    for a in range(len(dims)):
        da = np.abs(diff[..., a])
        other = np.all(np.delete(diff, a, axis=-1) == 0, axis=-1)
        adj = (da == 1)
        if a in periodic and dims[a] > 2:
            adj |= (da == dims[a] - 1)
        mult = np.ones_like(W)
        if a in periodic and dims[a] == 2:
            mult = np.full_like(W, 2.0)
        W -= params.J * mult * (adj & other)
    np.fill_diagonal(W, 0.0)
    dummy = SpinConfiguration(geometry, np.ones(dims, dtype=np.int8), bc)
    f, w, _ = _exterior_fields(dummy, params, tol)
    return W, f.ravel(), w.ravel()


def model_energy(spins: np.ndarray, W: np.ndarray, f: np.ndarray, c: np.ndarray) -> float:
    s = np.asarray(spins, dtype=float).ravel()
    return 0.5 * (s @ W @ s - W.sum()) + float(f @ s - c.sum())


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_striped(geometry: BoxGeometry, axis: int, profile, first_sign: int = -1,
                 bc: BoundaryCondition | None = None) -> SpinConfiguration:
    """Blocks of alternating sign along ``axis`` with the given widths."""
    widths = [int(w) for w in getattr(profile, "widths", profile)]
    if any(w < 1 for w in widths):
        raise ValueError("stripe widths must be >= 1")
    if sum(widths) != geometry.dims[axis]:
        raise ValueError(f"widths sum to {sum(widths)}, side is {geometry.dims[axis]}")
    if first_sign not in (1, -1):
        raise ValueError("first_sign must be +1 or -1")
    line = np.concatenate([np.full(w, first_sign * (-1) ** i, dtype=np.int8)
                           for i, w in enumerate(widths)])
    shape = [1] * geometry.d
    shape[axis] = geometry.dims[axis]
    spins = np.broadcast_to(line.reshape(shape), geometry.dims)
    if bc is None:
        bc = Periodic((axis,))
    return SpinConfiguration(geometry, spins, bc)


def random_configuration(geometry: BoxGeometry, bc: BoundaryCondition, seed: int,
                         minus_density: float = 0.5) -> SpinConfiguration:
    if not 0.0 <= minus_density <= 1.0:
        raise ValueError("minus_density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    minus = rng.random(geometry.dims) < minus_density
    return SpinConfiguration(geometry, np.where(minus, -1, 1).astype(np.int8), bc)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def _bc_token(bc: BoundaryCondition) -> str:
    if isinstance(bc, AllPlus):
        return "plus"
    if isinstance(bc, AllMinus):
        return "minus"
    if isinstance(bc, Periodic):
        return "periodic:" + ",".join(str(a) for a in bc.axes)
    raise ValueError("explicit exterior conditions have no text form")


def _parse_bc(tok: str) -> BoundaryCondition:
    if tok == "plus":
        return AllPlus()
    if tok == "minus":
        return AllMinus()
    if tok.startswith("periodic:"):
        return Periodic(tuple(int(a) for a in tok.split(":", 1)[1].split(",")))
    raise ValueError(f"unknown boundary condition {tok!r}")


def to_text(config: SpinConfiguration) -> str:
    """Header ``d w h [l] bc`` then rows of +/- (x along a row, y down the rows).

    In 3D the h-row blocks of successive z layers are separated by blank lines.
    """
    dims = config.geometry.dims
    lines = [" ".join([str(config.d), *map(str, dims), _bc_token(config.bc)])]
    chars = np.where(config.spins > 0, "+", "-")
    if config.d == 2:
        for y in range(dims[1]):
            lines.append("".join(chars[:, y]))
    else:
        for z in range(dims[2]):
            if z:
                lines.append("")
            for y in range(dims[1]):
                lines.append("".join(chars[:, y, z]))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> SpinConfiguration:
    lines = text.splitlines()
    head = lines[0].split()
    d = int(head[0])
    dims = tuple(int(t) for t in head[1:1 + d])
    bc = _parse_bc(head[1 + d])
    rows = [ln for ln in lines[1:] if ln.strip()]
    spins = np.empty(dims, dtype=np.int8)
    if len(rows) != math.prod(dims[1:]):
        raise ValueError("row count does not match header")
    for k, row in enumerate(rows):
        if len(row) != dims[0] or set(row) - {"+", "-"}:
            raise ValueError(f"malformed row {row!r}")
        vals = np.array([1 if c == "+" else -1 for c in row], dtype=np.int8)
        if d == 2:
            spins[:, k] = vals
        else:
            spins[:, k % dims[1], k // dims[1]] = vals
    return SpinConfiguration(BoxGeometry(dims), spins, bc)
