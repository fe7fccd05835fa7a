"""Contours, droplets, facing distances, corners and localization into boxes.

Boundary elements (bonds in 2D, plaquettes in 3D) are stored as integer rows
``(x_0, .., x_{d-1}, axis, dir)``: the element separates the droplet site x
from the site x + dir * e_axis outside it.

Corner convention: corners are read off 2x2 windows of droplet membership in
every coordinate plane (in 3D, every 2x2 section perpendicular to each axis).
One member gives 1 corner, two diagonal members give 2 (the chopped vertex
contributes one turn to each square), three give 1, two adjacent or four give
0.  Everything corner-related goes through :func:`window_corners`.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .spin_lattice import AllPlus, Periodic, SpinConfiguration

# exterior handling per axis
WRAP, PLUS, NONE = "wrap", "plus", "none"

# corners produced by a 2x2 window, indexed by the 4-bit membership pattern
# bits: (0,0)=1, (1,0)=2, (0,1)=4, (1,1)=8
_WINDOW_CORNERS = np.array([0, 1, 1, 0, 1, 0, 2, 1, 1, 2, 0, 1, 0, 1, 1, 0], dtype=np.int64)

INF = math.inf


def axis_modes(bc, d: int) -> tuple[str, ...]:
    if isinstance(bc, AllPlus):
        return (PLUS,) * d
    if isinstance(bc, Periodic):
        return tuple(WRAP if a in bc.axes else NONE for a in range(d))
    raise ValueError(f"contours are defined for AllPlus or Periodic conditions, got {bc!r}")


def _shift(m: np.ndarray, axis: int, step: int, mode: str) -> np.ndarray:
    """out[x] = m[x + step e_axis], False beyond the box unless wrapping."""
    if mode == WRAP:
        return np.roll(m, -step, axis=axis)
    out = np.zeros_like(m)
    n = m.shape[axis]
    if abs(step) >= n:
        return out
    src = [slice(None)] * m.ndim
    dst = [slice(None)] * m.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, None), slice(0, n - step)
    else:
        src[axis], dst[axis] = slice(0, n + step), slice(-step, None)
    out[tuple(dst)] = m[tuple(src)]
    return out


def _inside(shape, axis, step) -> np.ndarray:
    """True where x + step e_axis lies in the box."""
    idx = np.arange(shape[axis])
    ok = (idx + step >= 0) & (idx + step < shape[axis])
    sh = [1] * len(shape)
    sh[axis] = shape[axis]
    return np.broadcast_to(ok.reshape(sh), shape)


def boundary_elements(mask: np.ndarray, modes) -> np.ndarray:
    """All (site, axis, dir) rows with site in mask and its neighbour outside."""
    rows = []
    for a in range(mask.ndim):
        for s in (-1, 1):
            out = mask & ~_shift(mask, a, s, modes[a])
            if modes[a] == NONE:
                out &= _inside(mask.shape, a, s)
            pts = np.argwhere(out)
            if len(pts):
                rows.append(np.column_stack([pts, np.full(len(pts), a), np.full(len(pts), s)]))
    if not rows:
        return np.zeros((0, mask.ndim + 2), dtype=np.int64)
    return np.concatenate(rows).astype(np.int64)


def run_lengths(mask: np.ndarray, axis: int, direction: int, mode: str) -> np.ndarray:
    """Number of consecutive mask sites starting at x and moving along ``direction``.

    Runs that never end (a full periodic line) or that leave an open box with
    no exterior are reported as inf.
    """
    n = mask.shape[axis]
    run = mask.astype(np.float64)
    cur = mask.copy()
    for k in range(1, n):
        cur = cur & _shift(mask, axis, k * direction, mode)
        if not cur.any():
            break
        run += cur
    if mode == WRAP:
        run[run >= n] = INF
    elif mode == NONE:
        # the run reaches the box edge: no facing element exists
        idx = np.arange(n)
        dist_to_edge = (n - idx) if direction > 0 else (idx + 1)
        sh = [1] * mask.ndim
        sh[axis] = n
        run[mask & (run >= dist_to_edge.reshape(sh))] = INF
    return run


def facing_distances(mask: np.ndarray, elements: np.ndarray, modes) -> np.ndarray:
    """d_b for each element: the run of droplet sites from x_b away from y_b."""
    out = np.empty(len(elements))
    d = mask.ndim
    for a in range(d):
        for s in (-1, 1):
            sel = (elements[:, d] == a) & (elements[:, d + 1] == s)
            if sel.any():
                run = run_lengths(mask, a, -s, modes[a])
                out[sel] = run[tuple(elements[sel, :d].T)]
    return out


# ---------------------------------------------------------------------------
# corners
# ---------------------------------------------------------------------------

def _window_codes(mask: np.ndarray, plane: tuple[int, int], modes) -> np.ndarray:
    """4-bit window code at every dual edge/vertex of the given coordinate plane.

    The window at index i along an axis covers cells i-1 and i.  Along
    wrapped axes there are n windows, otherwise n+1 (padding with False).
    """
    a, b = plane
    pad = [(0, 0)] * mask.ndim
    m = mask
    for ax in (a, b):
        if modes[ax] != WRAP:
            pad[ax] = (1, 1)
    m = np.pad(m, pad)
    # lower-left (i-1, j-1), lower-right (i, j-1), upper-left (i-1, j), upper-right (i, j)
    def cell(da, db):
        x = m
        if modes[a] == WRAP:
            x = np.roll(x, 1 - da, axis=a)
        else:
            sl = [slice(None)] * x.ndim
            sl[a] = slice(da, x.shape[a] - 1 + da)
            x = x[tuple(sl)]
        if modes[b] == WRAP:
            x = np.roll(x, 1 - db, axis=b)
        else:
            sl = [slice(None)] * x.ndim
            sl[b] = slice(db, x.shape[b] - 1 + db)
            x = x[tuple(sl)]
        return x.astype(np.int64)
    return cell(0, 0) + 2 * cell(1, 0) + 4 * cell(0, 1) + 8 * cell(1, 1)


def _planes(d: int):
    return [(0, 1)] if d == 2 else [(1, 2), (0, 2), (0, 1)]


def window_corners(mask: np.ndarray, modes) -> int:
    """Corner count (2D) or edge-corner count (3D) of a site set."""
    total = 0
    for plane in _planes(mask.ndim):
        total += int(_WINDOW_CORNERS[_window_codes(mask, plane, modes)].sum())
    return total


# ---------------------------------------------------------------------------
# contour and droplets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Contour:
    """Boundary elements of the minus region.

    polygons (2D only) lists element indices in traversal order, minus on the
    left; closed polygons repeat no element.  chop_resolutions lists the dual
    vertices (as cell-index pairs (i, j) for the point (i - 1/2, j - 1/2))
    where two minus squares touch diagonally.
    """

    d: int
    elements: np.ndarray
    chop_resolutions: tuple = ()
    polygons: tuple = ()
    closed: tuple = ()

    def __len__(self):
        return len(self.elements)


_DIRS_2D = {  # (axis, dir) -> (start offset, end offset) of the oriented bond
    (1, -1): ((0, 0), (1, 0)),
    (0, 1): ((1, 0), (1, 1)),
    (1, 1): ((1, 1), (0, 1)),
    (0, -1): ((0, 1), (0, 0)),
}


def _trace_polygons(elements: np.ndarray, dims, modes):
    """Follow oriented bonds; at 4-valent vertices turn left (hugging minus)."""
    def wrapv(v):
        return tuple(v[a] % dims[a] if modes[a] == WRAP else v[a] for a in range(2))
    starts = {}
    ends = []
    for k, (x, y, a, s) in enumerate(elements):
        so, eo = _DIRS_2D[(int(a), int(s))]
        sv = wrapv((x + so[0], y + so[1]))
        ev = wrapv((x + eo[0], y + eo[1]))
        starts.setdefault(sv, []).append(k)
        ends.append((ev, (eo[0] - so[0], eo[1] - so[1])))
    def out_dir(k):
        x, y, a, s = elements[k]
        so, eo = _DIRS_2D[(int(a), int(s))]
        return (eo[0] - so[0], eo[1] - so[1])
    incoming = {}
    for k, (ev, _) in enumerate(ends):
        incoming[ev] = incoming.get(ev, 0) + 1

    def successor(k):
        ev, u = ends[k]
        cands = starts.get(ev, [])
        if not cands:
            return None
        if len(cands) == 1:
            return cands[0]
        left = (-u[1], u[0])
        for c in cands:
            if out_dir(c) == left:
                return c
        raise AssertionError("inconsistent 4-valent vertex")

    used = np.zeros(len(elements), dtype=bool)
    polys, closed = [], []
    # open chains first: start where a bond has no predecessor
    heads = []
    for v, ks in starts.items():
        extra = len(ks) - incoming.get(v, 0)
        if extra > 0:
            heads.extend(ks[:extra])
    for pool in (heads, range(len(elements))):
        for k0 in pool:
            if used[k0]:
                continue
            poly = [k0]
            used[k0] = True
            k = successor(k0)
            while k is not None and not used[k]:
                poly.append(k)
                used[k] = True
                k = successor(k)
            polys.append(tuple(poly))
            closed.append(k == k0)
    return tuple(polys), tuple(closed)


def extract_contour(config: SpinConfiguration) -> Contour:
    modes = axis_modes(config.bc, config.d)
    mask = config.minus
    elements = boundary_elements(mask, modes)
    chops = []
    if config.d == 2:
        codes = _window_codes(mask, (0, 1), modes)
        for i, j in np.argwhere((codes == 6) | (codes == 9)):
            chops.append((int(i), int(j)))
        polys, closed = _trace_polygons(elements, config.geometry.dims, modes)
    else:
        polys, closed = (), ()
    return Contour(config.d, elements, tuple(chops), polys, closed)


def turning_numbers(contour: Contour) -> list[int]:
    """Net quarter turns of each 2D polygon (+4 outer boundary, -4 hole)."""
    out = []
    for poly in contour.polygons:
        dirs = []
        for k in poly:
            x, y, a, s = contour.elements[k]
            so, eo = _DIRS_2D[(int(a), int(s))]
            dirs.append((eo[0] - so[0], eo[1] - so[1]))
        total = 0
        for u, w in zip(dirs, dirs[1:] + dirs[:1]):
            cross = u[0] * w[1] - u[1] * w[0]
            total += cross
        out.append(total)
    return out


@dataclass(frozen=True, eq=False)
class Droplet:
    """A maximal connected set of minus sites and its boundary elements."""

    mask: np.ndarray
    modes: tuple[str, ...]
    label: int = 0
    boundary: np.ndarray = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        if self.boundary is None:
            object.__setattr__(self, "boundary", boundary_elements(m, self.modes))

    @property
    def d(self) -> int:
        return self.mask.ndim

    @property
    def sites(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def contour_length(self) -> int:
        return len(self.boundary)


def droplet_from_sites(sites, d: int | None = None) -> Droplet:
    """An isolated droplet (AllPlus surroundings) on its bounding box."""
    pts = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    lo = pts.min(axis=0)
    pts = pts - lo
    mask = np.zeros(tuple(pts.max(axis=0) + 1), dtype=bool)
    mask[tuple(pts.T)] = True
    if d is not None and mask.ndim != d:
        raise ValueError("site dimension mismatch")
    return Droplet(mask, (PLUS,) * mask.ndim)


def label_components(mask: np.ndarray, modes) -> tuple[np.ndarray, int]:
    """Nearest-neighbour connected components, glued across wrapped axes."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return labels, 0
    parent = np.arange(n + 1)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, mode in enumerate(modes):
        if mode != WRAP or mask.shape[a] < 2:
            continue
        first = np.take(labels, 0, axis=a)
        last = np.take(labels, -1, axis=a)
        for u, v in zip(first[(first > 0) & (last > 0)], last[(first > 0) & (last > 0)]):
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
    roots = np.array([find(i) for i in range(n + 1)])
    uniq, relabel = np.unique(roots, return_inverse=True)
    return relabel[labels], len(uniq) - 1


def split_droplets(config: SpinConfiguration) -> list[Droplet]:
    """Droplets ordered by their first site in C order."""
    modes = axis_modes(config.bc, config.d)
    labels, n = label_components(config.minus, modes)
    order = []
    seen = set()
    for lab in labels.ravel():
        if lab and lab not in seen:
            seen.add(lab)
            order.append(lab)
    return [Droplet(labels == lab, modes, k) for k, lab in enumerate(order)]


def facing_distance(bond, droplet: Droplet) -> float:
    """d_b for one element row (x..., axis, dir); inf when no facing element exists."""
    bond = np.asarray(bond, dtype=np.int64)
    match = np.all(droplet.boundary == bond, axis=1)
    if not match.any():
        raise ValueError(f"{tuple(bond)} is not on the droplet boundary")
    return float(facing_distances(droplet.mask, bond[None], droplet.modes)[0])


def corner_count(droplet: Droplet, d: int | None = None) -> int:
    if d is not None and d != droplet.d:
        raise ValueError("dimension mismatch")
    return window_corners(droplet.mask, droplet.modes)


def total_corner_count(config: SpinConfiguration) -> int:
    """N_c summed over all droplets (droplet-independent under the convention)."""
    return window_corners(config.minus, axis_modes(config.bc, config.d))


# ---------------------------------------------------------------------------
# shadowed pairs and boundary pair counts
# ---------------------------------------------------------------------------

def _run_starts(mask: np.ndarray, axis: int) -> np.ndarray:
    """Coordinate where the run containing x begins (only meaningful on mask)."""
    back = run_lengths(mask, axis, -1, PLUS)
    idx = np.arange(mask.shape[axis]).reshape([-1 if a == axis else 1 for a in range(mask.ndim)])
    return (idx - back + 1).astype(np.int64)


def path_orders(d: int) -> list[tuple[int, ...]]:
    """Canonical axis orders: hv, vh in 2D; 123, 231, 312 in 3D (0-based)."""
    return [(0, 1), (1, 0)] if d == 2 else [(0, 1, 2), (1, 2, 0), (2, 0, 1)]


def _paths_inside(mask, starts, xs, ys, order):
    """For site arrays xs, ys (k, d): does the path with ``order`` stay in mask?"""
    ok = np.ones(len(xs), dtype=bool)
    cur = xs.copy()
    for ax in order:
        nxt = cur.copy()
        nxt[:, ax] = ys[:, ax]
        in_c = mask[tuple(cur.T)]
        in_n = mask[tuple(nxt.T)]
        same = starts[ax][tuple(cur.T)] == starts[ax][tuple(nxt.T)]
        ok &= in_c & in_n & same
        cur = nxt
    return ok


def shadowed_pairs(droplet: Droplet, radius_cap: float = INF) -> np.ndarray:
    """Pairs {x, y} of droplet sites for which every canonical path leaves the droplet.

    Paths are taken in both orientations (x to y and y to x), which in 2D is
    the same as hv and vh from x.  Returns an int array (k, 2, d) with x
    before y in C order.  Paths live in box coordinates (no wrapping).
    """
    if radius_cap < 1:
        raise ValueError("radius_cap must be >= 1")
    mask = droplet.mask
    sites = droplet.sites
    k = len(sites)
    if k < 2:
        return np.zeros((0, 2, mask.ndim), dtype=np.int64)
    i, j = np.triu_indices(k, 1)
    xs, ys = sites[i], sites[j]
    if math.isfinite(radius_cap):
        keep = ((xs - ys) ** 2).sum(axis=1) <= radius_cap ** 2
        xs, ys = xs[keep], ys[keep]
    starts = [_run_starts(mask, a) for a in range(mask.ndim)]
    blocked = np.ones(len(xs), dtype=bool)
    for order in path_orders(mask.ndim):
        blocked &= ~_paths_inside(mask, starts, xs, ys, order)
        blocked &= ~_paths_inside(mask, starts, ys, xs, order)
    return np.stack([xs[blocked], ys[blocked]], axis=1)


def boundary_pair_count(droplet: Droplet, n, params=None) -> int:
    """N_n: ordered pairs (x, y), x in the droplet, y outside, y - x = +n or -n.

    Equal to 2 (|droplet| - C(n)) with C the autocorrelation of the site set.
    ``params`` is accepted for signature symmetry with the energy routines.
    """
    n = tuple(int(c) for c in n)
    if len(n) != droplet.d or not any(n):
        raise ValueError("n must be a nonzero lattice vector of the droplet dimension")
    m = droplet.mask
    shifted = m
    for a, c in enumerate(n):
        if c:
            shifted = _shift(shifted, a, c, droplet.modes[a])
    overlap = int((m & shifted).sum())
    return 2 * (droplet.size - overlap)


# ---------------------------------------------------------------------------
# localization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Bubble:
    """Restriction of a droplet to one box: a component of droplet & Q."""

    box_id: tuple[int, ...]
    droplet_index: int
    mask: np.ndarray
    boundary: np.ndarray
    local_facing: np.ndarray
    bulk_corners: int
    boundary_corners: int

    @property
    def corner_count(self) -> int:
        return self.bulk_corners + self.boundary_corners

    @property
    def sites(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def contour_length(self) -> int:
        return len(self.boundary)


def _corner_owners(mask: np.ndarray, modes, ell: int):
    """Attribute every corner of the site set to a cell, or drop it.

    Yields (owner cell coordinates, count, on_cut) triples.  A corner whose
    dual vertex (edge, in 3D) lies on box cuts in both plane axes is dropped.
    Cuts sit at multiples of ell along every axis, the box faces included.
    """
    d = mask.ndim
    out = []
    for a, b in _planes(d):
        codes = _window_codes(mask, (a, b), modes)
        nz = np.argwhere(_WINDOW_CORNERS[codes] > 0)
        for w in nz:
            code = int(codes[tuple(w)])
            ia, ib = int(w[a]), int(w[b])
            na, nb = mask.shape[a], mask.shape[b]
            # window index i covers cells i-1 and i: it lies on a cut iff i % ell == 0
            cut_a = ia % ell == 0 or (modes[a] != WRAP and ia == na)
            cut_b = ib % ell == 0 or (modes[b] != WRAP and ib == nb)
            if cut_a and cut_b:
                continue
            cells = {}
            for bit, (da, db) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
                if code >> bit & 1:
                    c = w.copy()
                    c[a] = (ia - 1 + da) % na if modes[a] == WRAP else ia - 1 + da
                    c[b] = (ib - 1 + db) % nb if modes[b] == WRAP else ib - 1 + db
                    cells[(da, db)] = c
            if len(cells) in (1, 2):
                # convex turns: each member cell owns its own turn
                for c in cells.values():
                    out.append((c, 1, cut_a or cut_b))
                continue
            # concave turn; the plus cell P and its two member neighbours
            (pa, pb), = [k for k in ((0, 0), (1, 0), (0, 1), (1, 1)) if k not in cells]
            along_a = cells[(1 - pa, pb)]  # shares the element lying on the a-cut line
            along_b = cells[(pa, 1 - pb)]
            if cut_a:
                owner = along_a
            elif cut_b:
                owner = along_b
            else:
                owner = along_a
            out.append((owner, 1, cut_a or cut_b))
    return out


def localize(config: SpinConfiguration, ell: int) -> dict[tuple[int, ...], list[Bubble]]:
    """Partition the box into cubes of side ell (clipped at the far faces) and
    split each droplet into bubbles.

    An element belongs to the cube containing its droplet site.  The local
    facing distance is d_b when the facing element belongs to the same
    bubble, else inf.
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    modes = axis_modes(config.bc, config.d)
    d = config.d
    result: dict[tuple[int, ...], list[Bubble]] = {}
    dims = config.geometry.dims
    nboxes = [math.ceil(n / ell) for n in dims]
    for box in itertools.product(*[range(k) for k in nboxes]):
        result[box] = []
    for drop in split_droplets(config):
        el = drop.boundary
        site = el[:, :d]
        dist = facing_distances(drop.mask, el, modes)
        local = np.full(len(el), INF)
        for r in np.nonzero(np.isfinite(dist))[0]:
            a, s = el[r, d], el[r, d + 1]
            end_a = site[r, a] - s * (int(dist[r]) - 1)
            # the run stays in one cube iff both ends share the cube index
            # (a run crossing the periodic seam never does)
            if 0 <= end_a < dims[a] and end_a // ell == site[r, a] // ell:
                local[r] = dist[r]
        owners = _corner_owners(drop.mask, modes, ell)
        for box in result:
            region = tuple(slice(q * ell, (q + 1) * ell) for q in box)
            sub = drop.mask[region]
            if not sub.any():
                continue
            sub_modes = tuple(WRAP if modes[a] == WRAP and ell >= dims[a] else PLUS
                              for a in range(d))
            lab, nlab = label_components(sub, sub_modes)
            full = np.zeros(dims, dtype=np.int64)
            full[region] = lab
            owner_labels = [(full[tuple(c)], on_cut) for c, _, on_cut in owners]
            site_labels = full[tuple(site.T)]
            for k in range(1, nlab + 1):
                sel = site_labels == k
                bulk = sum(1 for lab_c, on_cut in owner_labels if lab_c == k and not on_cut)
                bnd = sum(1 for lab_c, on_cut in owner_labels if lab_c == k and on_cut)
                result[box].append(Bubble(tuple(box), drop.label, full == k, el[sel],
                                          local[sel], bulk, bnd))
    return result


# ---------------------------------------------------------------------------
# polyomino corpus
# ---------------------------------------------------------------------------

def fixed_polyominoes(max_cells: int):
    """Yield every fixed polyomino with at most max_cells cells as a cell tuple.

    Redelmeier's method: each polyomino is generated exactly once, anchored at
    its lowest-then-leftmost cell.
    """
    if max_cells < 1:
        return

    def valid(c):
        return c[1] > 0 or (c[1] == 0 and c[0] >= 0)

    def nbrs(c):
        x, y = c
        return ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))

    stack = [((), [(0, 0)], frozenset([(0, 0)]))]
    while stack:
        poly, untried, seen = stack.pop()
        untried = list(untried)
        while untried:
            c = untried.pop()
            new = poly + (c,)
            yield new
            if len(new) < max_cells:
                extra = [nb for nb in nbrs(c) if valid(nb) and nb not in seen]
                stack.append((new, untried + extra, seen | set(extra)))


@lru_cache(maxsize=4)
def polyomino_masks(max_cells: int) -> dict[tuple[int, int], np.ndarray]:
    """Fixed polyominoes up to max_cells grouped by bounding box (w, h) as
    boolean arrays of shape (count, w, h)."""
    groups: dict[tuple[int, int], list] = {}
    for poly in fixed_polyominoes(max_cells):
        xs = [c[0] for c in poly]
        ys = [c[1] for c in poly]
        x0 = min(xs)
        w, h = max(xs) - x0 + 1, max(ys) + 1
        groups.setdefault((w, h), []).append([(x - x0) * h + y for x, y in zip(xs, ys)])
    out = {}
    for (w, h), lst in groups.items():
        arr = np.zeros((len(lst), w * h), dtype=bool)
        for r, flat in enumerate(lst):
            arr[r, flat] = True
        arr = arr.reshape(len(lst), w, h)
        arr.setflags(write=False)
        out[(w, h)] = arr
    return out


@dataclass(frozen=True, eq=False)
class PolyominoBatch:
    """Geometry of a batch of isolated 2D droplets sharing one bounding box.

    facing_hist[b, i, k] counts elements orthogonal to axis i with facing
    distance k.  autocorr[b, n0 + w - 1, n1 + h - 1] is C(n), the number of
    sites x with x + n also in the droplet.  shadowed[b, q] flags the site
    pair (pair_u[q], pair_v[q]) (flat indices into the w x h box).
    """

    masks: np.ndarray
    sizes: np.ndarray
    contour_lengths: np.ndarray
    facing_hist: np.ndarray
    corners: np.ndarray
    autocorr: np.ndarray
    pair_u: np.ndarray
    pair_v: np.ndarray
    shadowed: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]

    def pair_offsets(self) -> np.ndarray:
        w, h = self.shape
        u = np.stack(np.unravel_index(self.pair_u, (w, h)), axis=1)
        v = np.stack(np.unravel_index(self.pair_v, (w, h)), axis=1)
        return v - u


def _batch_runs(m: np.ndarray, axis: int, direction: int) -> np.ndarray:
    """Run lengths along a box axis (axis 1 or 2 of a (B, w, h) batch)."""
    run = m.astype(np.int64)
    cur = m.copy()
    n = m.shape[axis]
    for k in range(1, n):
        cur = cur & _shift(m, axis, k * direction, PLUS)
        if not cur.any():
            break
        run += cur
    return run


def batch_geometry(masks: np.ndarray) -> PolyominoBatch:
    m = np.asarray(masks, dtype=bool)
    B, w, h = m.shape
    sizes = m.sum(axis=(1, 2))
    kmax = max(w, h)
    hist = np.zeros((B, 2, kmax + 1), dtype=np.int64)
    lengths = np.zeros(B, dtype=np.int64)
    for i, ax in enumerate((1, 2)):
        for s in (-1, 1):
            elem = m & ~_shift(m, ax, s, PLUS)
            run = _batch_runs(m, ax, -s)
            lengths += elem.sum(axis=(1, 2))
            for k in range(1, kmax + 1):
                hist[:, i, k] += (elem & (run == k)).sum(axis=(1, 2))
    padded = np.pad(m, ((0, 0), (1, 1), (1, 1)))
    code = (padded[:, :-1, :-1].astype(np.int64) + 2 * padded[:, 1:, :-1]
            + 4 * padded[:, :-1, 1:] + 8 * padded[:, 1:, 1:])
    corners = _WINDOW_CORNERS[code].sum(axis=(1, 2))
    # autocorrelation by zero-padded FFT (exact after rounding)
    f = np.fft.rfft2(m.astype(np.float64), s=(2 * w, 2 * h))
    ac = np.rint(np.fft.irfft2(f * np.conj(f), s=(2 * w, 2 * h))).astype(np.int64)
    idx0 = np.arange(-(w - 1), w) % (2 * w)
    idx1 = np.arange(-(h - 1), h) % (2 * h)
    autocorr = ac[:, idx0][:, :, idx1]
    # shadowed pairs over all position pairs of the box
    npos = w * h
    pu, pv = np.triu_indices(npos, 1)
    u0, u1 = np.unravel_index(pu, (w, h))
    v0, v1 = np.unravel_index(pv, (w, h))
    st0 = np.arange(w)[None, :, None] - _batch_runs(m, 1, -1) + 1
    st1 = np.arange(h)[None, None, :] - _batch_runs(m, 2, -1) + 1
    mf = m.reshape(B, -1)
    s0 = st0.reshape(B, -1)
    s1 = st1.reshape(B, -1)
    c_hv = v0 * h + u1  # corner of the horizontal-then-vertical path
    c_vh = u0 * h + v1
    hv = mf[:, c_hv] & (s0[:, pu] == s0[:, c_hv]) & (s1[:, c_hv] == s1[:, pv])
    vh = mf[:, c_vh] & (s1[:, pu] == s1[:, c_vh]) & (s0[:, c_vh] == s0[:, pv])
    shadowed = mf[:, pu] & mf[:, pv] & ~hv & ~vh
    return PolyominoBatch(m, sizes, lengths, hist, corners, autocorr, pu, pv, shadowed)


def polyomino_batches(max_cells: int, chunk: int = 20000):
    """Iterate PolyominoBatch chunks covering every fixed polyomino <= max_cells."""
    for key in sorted(polyomino_masks(max_cells)):
        arr = polyomino_masks(max_cells)[key]
        for start in range(0, len(arr), chunk):
            yield batch_geometry(arr[start:start + chunk])


def _facing_min_sums(batch: PolyominoBatch, n_max: int) -> np.ndarray:
    """S[b, i, k] = sum over elements on axis i of min(k, d_b), k = 0..n_max."""
    kk = np.arange(batch.facing_hist.shape[2])
    mins = np.minimum(np.arange(n_max + 1)[:, None], kk[None, :])
    return np.einsum("bik,mk->bim", batch.facing_hist, mins)


def counting_margins(batch: PolyominoBatch, n_max: int = 6) -> np.ndarray:
    """min over 0 < |n|_inf <= n_max of  sum_i sum_b min(|n_i|, d_b) - N_n."""
    w, h = batch.shape
    S = _facing_min_sums(batch, n_max)
    best = np.full(len(batch.sizes), np.iinfo(np.int64).max)
    for n0 in range(-n_max, n_max + 1):
        for n1 in range(-n_max, n_max + 1):
            if n0 == 0 and n1 == 0:
                continue
            if abs(n0) < w and abs(n1) < h:
                c = batch.autocorr[:, n0 + w - 1, n1 + h - 1]
            else:
                c = 0
            nn = 2 * (batch.sizes - c)
            rhs = S[:, 0, abs(n0)] + S[:, 1, abs(n1)]
            best = np.minimum(best, rhs - nn)
    return best


def refined_counting_margins(batch: PolyominoBatch) -> np.ndarray:
    """Diagonal-offset refinement: RHS - LHS with

    LHS = 1/2 sum over n = (+-1, +-1) of N_n,
    RHS = 1/2 sum over those n of sum_{i,b} min(|n_i|, d_b) - N_c
          - 2 #{shadowed pairs at a diagonal offset}.
    """
    w, h = batch.shape
    lhs = np.zeros(len(batch.sizes), dtype=np.int64)
    for n0, n1 in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        c = batch.autocorr[:, n0 + w - 1, n1 + h - 1] if (w > 1 and h > 1) else 0
        lhs += 2 * (batch.sizes - c)
    lhs //= 2
    off = batch.pair_offsets()
    diag = (np.abs(off[:, 0]) == 1) & (np.abs(off[:, 1]) == 1)
    pdiag = batch.shadowed[:, diag].sum(axis=1)
    rhs = 2 * batch.contour_lengths - batch.corners - 2 * pdiag
    return rhs - lhs


# ---------------------------------------------------------------------------
# JSON dumps
# ---------------------------------------------------------------------------

def droplet_record(droplet: Droplet) -> dict:
    return {
        "label": droplet.label,
        "sites": droplet.sites.tolist(),
        "boundary": droplet.boundary.tolist(),
        "corners": corner_count(droplet),
    }


def bubble_record(bubble: Bubble) -> dict:
    return {
        "box": list(bubble.box_id),
        "droplet": bubble.droplet_index,
        "sites": bubble.sites.tolist(),
        "boundary": bubble.boundary.tolist(),
        "local_facing": [None if not math.isfinite(v) else int(v) for v in bubble.local_facing],
        "bulk_corners": bubble.bulk_corners,
        "boundary_corners": bubble.boundary_corners,
    }


def dumps(records) -> str:
    return json.dumps(records, indent=1)
