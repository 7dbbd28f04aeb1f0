"""Exact geometry on Z^d: boxes, boundaries, interiors, covers, buffered subsets.

Box centers, sides and cover steps are ``fractions.Fraction`` values so
membership and the cover step are decided without rounding.  Sites are
integer tuples, always kept in lexicographic order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .errors import InvalidArgument

__all__ = [
    "Box",
    "Region",
    "BoundarySet",
    "CoverGeometry",
    "BufferedSubsetGeometry",
    "as_rational",
    "box_sites",
    "boundaries",
    "interior",
    "suitable_cover",
    "cover_box_for_site",
    "check_cover",
    "nesting_holds",
    "g2_components",
    "build_buffered_subset",
    "floor_power",
    "sup_distance_matrix",
    "min_sup_distance",
    "is_connected",
]


def as_rational(x) -> Fraction:
    """Convert ints, Fractions, decimal strings and floats to a Fraction.

    Floats go through their shortest repr, so ``0.1`` becomes ``1/10``.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise InvalidArgument("boolean is not a rational number")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise InvalidArgument(f"non-finite value {x!r}")
        return Fraction(repr(float(x)))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidArgument(f"cannot parse rational {x!r}") from exc
    raise InvalidArgument(f"cannot convert {type(x).__name__} to a rational")


def floor_power(x, p) -> int:
    """floor(x ** p) with a guard against values landing just below an integer."""
    v = float(x) ** float(p)
    r = round(v)
    if abs(v - r) <= 1e-12 * max(1.0, abs(v)):
        return int(r)
    return int(math.floor(v))


@dataclass(frozen=True)
class Box:
    """The box of side ``side`` centered at ``center`` (sup-norm ball)."""

    center: tuple
    side: Fraction

    def __post_init__(self):
        center = tuple(as_rational(c) for c in self.center)
        side = as_rational(self.side)
        if len(center) == 0:
            raise InvalidArgument("box dimension must be positive")
        if side <= 0:
            raise InvalidArgument(f"box side must be positive, got {side}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", side)

    @classmethod
    def centered(cls, d: int, side) -> "Box":
        if d < 1:
            raise InvalidArgument("box dimension must be positive")
        return cls((0,) * d, side)

    @property
    def d(self) -> int:
        return len(self.center)

    def ranges(self):
        """Per-axis inclusive integer ranges (lo, hi) of the box."""
        half = self.side / 2
        return tuple((math.ceil(c - half), math.floor(c + half)) for c in self.center)

    def contains(self, y) -> bool:
        half = self.side / 2
        return all(abs(Fraction(int(yi)) - c) <= half for yi, c in zip(y, self.center))

    def __str__(self):
        c = ",".join(str(x) for x in self.center)
        return f"Box(center=({c}), side={self.side})"


def _lex_order(coords: np.ndarray) -> np.ndarray:
    if coords.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort(coords.T[::-1])


class Region:
    """A finite set of sites of Z^d with a fixed site <-> row correspondence.

    Construction sorts sites lexicographically; duplicates are rejected.
    """

    def __init__(self, sites, d: int | None = None, box: Box | None = None):
        arr = np.asarray(sites, dtype=np.int64)
        if arr.ndim == 1:
            if d is None and arr.size:
                raise InvalidArgument("flat site list needs an explicit dimension")
            arr = arr.reshape(-1, d if d else 1)
        if arr.ndim != 2:
            raise InvalidArgument("sites must be a list of integer vectors")
        if d is None:
            if arr.shape[0] == 0:
                raise InvalidArgument("empty region needs an explicit dimension")
            d = arr.shape[1]
        if arr.shape[0] == 0:
            arr = np.zeros((0, d), dtype=np.int64)
        if arr.shape[1] != d or d < 1:
            raise InvalidArgument(f"site dimension {arr.shape[1]} does not match d={d}")
        arr = arr[_lex_order(arr)]
        if arr.shape[0] > 1 and (np.diff(arr, axis=0) == 0).all(axis=1).any():
            raise InvalidArgument("region sites must be distinct")
        arr.setflags(write=False)
        self.coords = arr
        self.d = d
        self.box = box
        self._index = None

    @classmethod
    def from_points(cls, points, d: int) -> "Region":
        return cls(list(points), d=d)

    def __len__(self):
        return self.coords.shape[0]

    def __iter__(self):
        return iter(self.sites)

    def __repr__(self):
        return f"Region(d={self.d}, n={len(self)})"

    def __eq__(self, other):
        return isinstance(other, Region) and self.d == other.d and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.d, self.coords.tobytes()))

    @cached_property
    def sites(self) -> tuple:
        return tuple(tuple(int(c) for c in row) for row in self.coords)

    @property
    def index(self) -> dict:
        if self._index is None:
            self._index = {s: i for i, s in enumerate(self.sites)}
        return self._index

    def __contains__(self, site):
        return tuple(int(c) for c in site) in self.index

    def row(self, site) -> int:
        try:
            return self.index[tuple(int(c) for c in site)]
        except KeyError:
            raise InvalidArgument(f"site {site} is not in the region") from None

    def rows_of(self, other: "Region") -> np.ndarray:
        """Row indices in ``self`` of the sites of ``other`` (must be a subset)."""
        idx = self.index
        try:
            return np.fromiter((idx[s] for s in other.sites), dtype=np.int64, count=len(other))
        except KeyError:
            raise InvalidArgument("region is not a subset") from None

    def issubset(self, other: "Region") -> bool:
        if self.d != other.d:
            return False
        idx = other.index
        return all(s in idx for s in self.sites)

    def _mask_in(self, other: "Region") -> np.ndarray:
        idx = other.index
        return np.fromiter((s in idx for s in self.sites), dtype=bool, count=len(self))

    def difference(self, other: "Region") -> "Region":
        return Region(self.coords[~self._mask_in(other)], d=self.d)

    def intersection(self, other: "Region") -> "Region":
        return Region(self.coords[self._mask_in(other)], d=self.d)

    def union(self, other: "Region") -> "Region":
        extra = other.coords[~other._mask_in(self)]
        return Region(np.vstack([self.coords, extra]), d=self.d)

    def diameter(self) -> int:
        """Sup-norm diameter; 0 for regions with fewer than two sites."""
        if len(self) < 2:
            return 0
        return int((self.coords.max(axis=0) - self.coords.min(axis=0)).max())

    @cached_property
    def neighbor_pairs(self) -> np.ndarray:
        """Row pairs (i, j), i < j, of sites at Euclidean distance 1."""
        return _neighbor_pairs(self.coords)


def _grid_lookup(coords: np.ndarray):
    """Dense index grid over the bounding box of ``coords`` (-1 for gaps)."""
    lo = coords.min(axis=0)
    shape = tuple(int(s) for s in coords.max(axis=0) - lo + 1)
    grid = np.full(shape, -1, dtype=np.int64)
    grid[tuple((coords - lo).T)] = np.arange(coords.shape[0])
    return lo, grid


def _lookup(lo, grid, pts: np.ndarray) -> np.ndarray:
    rel = pts - lo
    ok = ((rel >= 0) & (rel < np.array(grid.shape))).all(axis=1)
    out = np.full(pts.shape[0], -1, dtype=np.int64)
    out[ok] = grid[tuple(rel[ok].T)]
    return out


def _neighbor_pairs(coords: np.ndarray) -> np.ndarray:
    n, d = coords.shape
    if n == 0:
        return np.zeros((0, 2), dtype=np.int64)
    lo, grid = _grid_lookup(coords)
    pairs = []
    for axis in range(d):
        shifted = coords.copy()
        shifted[:, axis] += 1
        j = _lookup(lo, grid, shifted)
        i = np.nonzero(j >= 0)[0]
        pairs.append(np.stack([i, j[i]], axis=1))
    out = np.vstack(pairs)
    out = np.sort(out, axis=1)
    return out[np.lexsort(out.T[::-1])]


@lru_cache(maxsize=256)
def box_sites(box: Box) -> Region:
    """All integer points of ``box`` in lexicographic order."""
    if not isinstance(box, Box):
        raise InvalidArgument("box_sites expects a Box")
    ranges = box.ranges()
    if any(lo > hi for lo, hi in ranges):
        return Region(np.zeros((0, box.d), dtype=np.int64), d=box.d, box=box)
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    return Region(coords, d=box.d, box=box)


@dataclass(frozen=True)
class BoundarySet:
    """Boundary of ``inner`` relative to ``outer``.

    ``edges`` are pairs (u, v) with u inside, v outside, |u - v| = 1.
    ``hat`` maps each exterior site to its unique inner contact when that
    contact is unique (always the case for box-shaped ``inner``), else None.
    """

    edges: tuple
    exterior: Region
    interior: Region
    hat: dict | None

    @property
    def max_contacts(self) -> int:
        if not self.edges:
            return 0
        counts = {}
        for _, v in self.edges:
            counts[v] = counts.get(v, 0) + 1
        return max(counts.values())


def boundaries(inner: Region, outer: Region) -> BoundarySet:
    if inner.d != outer.d:
        raise InvalidArgument("regions have different dimensions")
    if not inner.issubset(outer):
        raise InvalidArgument("inner region is not contained in outer region")
    d = inner.d
    empty = Region(np.zeros((0, d), dtype=np.int64), d=d)
    if len(inner) == 0 or len(inner) == len(outer):
        return BoundarySet((), empty, empty, {})
    lo, grid = _grid_lookup(outer.coords)
    in_inner = np.zeros(len(outer), dtype=bool)
    in_inner[outer.rows_of(inner)] = True
    us, vs = [], []
    for axis in range(d):
        for step in (-1, 1):
            shifted = inner.coords.copy()
            shifted[:, axis] += step
            j = _lookup(lo, grid, shifted)
            hit = j >= 0
            hit[hit] = ~in_inner[j[hit]]
            us.append(inner.coords[hit])
            vs.append(shifted[hit])
    u = np.vstack(us)
    v = np.vstack(vs)
    key = np.hstack([u, v])
    order = np.lexsort(key.T[::-1])
    u, v = u[order], v[order]
    edges = tuple((tuple(int(c) for c in a), tuple(int(c) for c in b)) for a, b in zip(u, v))
    exterior = Region(np.unique(v, axis=0), d=d)
    interior_ = Region(np.unique(u, axis=0), d=d)
    hat = {}
    for a, b in edges:
        if b in hat:
            hat = None
            break
        hat[b] = a
    return BoundarySet(edges, exterior, interior_, hat)


def sup_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


def min_sup_distance(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> np.ndarray:
    """For each row of ``a`` the sup-distance to the nearest row of ``b``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.empty(a.shape[0], dtype=np.int64)
    if b.shape[0] == 0:
        out[:] = np.iinfo(np.int64).max
        return out
    for s in range(0, a.shape[0], chunk):
        out[s : s + chunk] = sup_distance_matrix(a[s : s + chunk], b).min(axis=1)
    return out


def interior(psi: Region, theta: Region, t) -> tuple:
    """Thick interior of ``psi`` in ``theta`` and its inner boundary.

    Returns ``(psi_t, inner_boundary, boundary)`` where ``psi_t`` holds the
    sites of ``psi`` at sup-distance greater than floor(t) from
    ``theta \\ psi``, ``inner_boundary = psi \\ psi_t`` and ``boundary`` adds
    the exterior boundary of ``psi`` in ``theta``.
    """
    t = as_rational(t)
    if t < 0:
        raise InvalidArgument("t must be nonnegative")
    if not psi.issubset(theta):
        raise InvalidArgument("psi is not contained in theta")
    k = math.floor(t)
    rest = theta.difference(psi)
    dist = min_sup_distance(psi.coords, rest.coords)
    keep = dist > k
    psi_t = Region(psi.coords[keep], d=psi.d)
    inner_bdry = Region(psi.coords[~keep], d=psi.d)
    ext = boundaries(psi, theta).exterior
    return psi_t, inner_bdry, inner_bdry.union(ext)


# ---------------------------------------------------------------- covers


@dataclass(frozen=True)
class CoverGeometry:
    parent: Box
    ell: Fraction
    rho: Fraction
    k: int
    centers: tuple

    @property
    def step(self) -> Fraction:
        return self.rho * self.ell

    @cached_property
    def boxes(self) -> tuple:
        return tuple(Box(c, self.ell) for c in self.centers)

    @property
    def per_axis(self) -> int:
        return 2 * self.k + 1


def _admissible_k(L: Fraction, ell: Fraction):
    """All (k, rho) with rho = (L - ell)/(2 ell k) in [3/5, 4/5]."""
    lo, hi = Fraction(3, 5), Fraction(4, 5)
    base = (L - ell) / (2 * ell)
    out = []
    if base <= 0:
        return out
    k = max(1, math.ceil(base / hi))
    while base / k >= lo:
        rho = base / k
        if lo <= rho <= hi:
            out.append((k, rho))
        k += 1
    return out


def suitable_cover(box: Box, ell) -> CoverGeometry:
    """The suitable ell-cover of ``box`` using the largest admissible step."""
    ell = as_rational(ell)
    L = box.side
    if ell <= 0:
        raise InvalidArgument("ell must be positive")
    if ell > L / 6:
        raise InvalidArgument(f"ell={ell} exceeds L/6={L / 6}")
    options = _admissible_k(L, ell)
    assert options, "no admissible cover step although ell <= L/6"
    k, rho = min(options, key=lambda kr: kr[0])
    step = rho * ell
    offsets = [step * z for z in range(-k, k + 1)]
    centers = tuple(
        tuple(c + o for c, o in zip(box.center, combo))
        for combo in itertools.product(offsets, repeat=box.d)
    )
    return CoverGeometry(parent=box, ell=ell, rho=rho, k=k, centers=centers)


def _depth_ok(coords: np.ndarray, sub: Box, parent: Box, margin: int) -> np.ndarray:
    """Mask of ``coords`` lying in ``sub`` at sup-distance > margin from parent \\ sub."""
    sub_r = sub.ranges()
    par_r = parent.ranges()
    inside = np.ones(coords.shape[0], dtype=bool)
    depth = np.full(coords.shape[0], np.iinfo(np.int64).max, dtype=np.int64)
    for i, ((lo, hi), (plo, phi)) in enumerate(zip(sub_r, par_r)):
        x = coords[:, i]
        inside &= (x >= lo) & (x <= hi)
        if lo - 1 >= plo:
            depth = np.minimum(depth, x - (lo - 1))
        if hi + 1 <= phi:
            depth = np.minimum(depth, (hi + 1) - x)
    return inside & (depth > margin)


def cover_box_for_site(cover: CoverGeometry, b) -> Box:
    """A cover box holding ``b`` deep inside; lexicographically smallest center wins."""
    b = tuple(int(c) for c in b)
    if len(b) != cover.parent.d or not cover.parent.contains(b):
        raise InvalidArgument(f"site {b} is outside the parent box")
    margin = math.floor(cover.ell / 10)
    pt = np.array([b], dtype=np.int64)
    half = cover.ell / 2
    for c, bx in zip(cover.centers, cover.boxes):
        if any(abs(bi - ci) > half for bi, ci in zip(b, c)):
            continue
        if _depth_ok(pt, bx, cover.parent, margin)[0]:
            return bx
    raise AssertionError(f"no qualifying cover box for site {b}")


def _site_key(coords: np.ndarray, lo: np.ndarray, shape) -> np.ndarray:
    return np.ravel_multi_index(tuple((coords - lo).T), shape)


def check_cover(cover: CoverGeometry) -> dict:
    """Exhaustively check the nesting, covering and cardinality properties."""
    parent = box_sites(cover.parent)
    L, ell, d = cover.parent.side, cover.ell, cover.parent.d
    lo = np.array([r[0] for r in cover.parent.ranges()], dtype=np.int64)
    shape = tuple(r[1] - r[0] + 1 for r in cover.parent.ranges())
    covered = np.zeros(len(parent), dtype=bool)
    deep = np.zeros(len(parent), dtype=bool)
    inside_parent = True
    margin = math.floor(ell / 10)
    for bx in cover.boxes:
        sites = box_sites(bx)
        if not all(cover.parent.contains(s) for s in (sites.coords[0], sites.coords[-1])):
            inside_parent = False
            continue
        covered[_site_key(sites.coords, lo, shape)] = True
        deep |= _depth_ok(parent.coords, bx, cover.parent, margin)
    n = len(cover.centers)
    count_formula = ((L - ell) / (cover.rho * ell) + 1) ** d
    return {
        "n_centers": n,
        "nesting": bool(inside_parent and covered.all()),
        "covproperty": bool(deep.all()),
        "number": bool((L / ell) ** d <= n <= (2 * L / ell) ** d and count_formula == n),
        "rho_admissible": bool(
            Fraction(3, 5) <= cover.rho <= Fraction(4, 5) and cover.rho == (L - ell) / (2 * ell * cover.k)
        ),
    }


def nesting_holds(cover: CoverGeometry, a, k: int) -> bool:
    """Whether the box of side (2 k rho + 1) ell at grid point ``a`` is the union of
    the side-ell boxes at grid points inside it."""
    a = tuple(as_rational(c) for c in a)
    step = cover.step
    big = Box(a, (2 * k * cover.rho + 1) * cover.ell)
    offs = [step * z for z in range(-k, k + 1)]
    union = set()
    for combo in itertools.product(offs, repeat=len(a)):
        c = tuple(ai + o for ai, o in zip(a, combo))
        union.update(box_sites(Box(c, cover.ell)).sites)
    return union == set(box_sites(big).sites)


def _rational_sup(a, b) -> Fraction:
    return max(abs(x - y) for x, y in zip(a, b))


def g2_components(centers, rho, ell) -> list:
    """Connected components of the graph joining centers at sup-distance
    2 rho ell or 3 rho ell.  Components and their members are sorted."""
    pts = sorted(tuple(as_rational(c) for c in p) for p in centers)
    step = as_rational(rho) * as_rational(ell)
    parent = list(range(len(pts)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            r = _rational_sup(pts[i], pts[j]) / step
            if r == 2 or r == 3:
                a, b = find(i), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    groups = {}
    for i, p in enumerate(pts):
        groups.setdefault(find(i), []).append(p)
    return sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])


def _union_of_boxes(centers, ell, d) -> Region:
    sites = set()
    for c in centers:
        sites.update(box_sites(Box(c, ell)).sites)
    if not sites:
        return Region(np.zeros((0, d), dtype=np.int64), d=d)
    return Region(sorted(sites), d=d)


@dataclass(frozen=True)
class BufferedSubsetGeometry:
    phi: tuple
    core: tuple
    buffer_centers: tuple
    upsilon: Region
    check: Region
    check_tau: Region
    hat: Region
    hat_tau: Region
    ell: Fraction
    ell_tau: int
    parent: Box = field(repr=False)

    def diameter(self) -> int:
        return self.upsilon.diameter()

    def uncovered_boundary_sites(self) -> tuple:
        """Interior-boundary sites of the set (relative to the parent box) that
        lie in no thick buffer interior.  Empty when the buffer does its job."""
        parent = box_sites(self.parent)
        inner = boundaries(self.upsilon, parent).interior
        idx = self.check_tau.index
        return tuple(s for s in inner.sites if s not in idx)


def build_buffered_subset(phi, cover: CoverGeometry, tau) -> BufferedSubsetGeometry:
    phi = tuple(sorted(tuple(as_rational(c) for c in p) for p in phi))
    if not phi:
        raise InvalidArgument("phi must be nonempty")
    centers = set(cover.centers)
    if any(p not in centers for p in phi):
        raise InvalidArgument("phi is not a subset of the cover centers")
    d = cover.parent.d
    # centers are parent.center + step * z with integer z; work with z exactly
    grid = np.array(
        [[int((c - o) / cover.step) for c, o in zip(a, cover.parent.center)] for a in cover.centers], dtype=np.int64
    )
    pos = {a: i for i, a in enumerate(cover.centers)}
    in_phi = np.zeros(len(grid), dtype=bool)
    in_phi[[pos[p] for p in phi]] = True
    near_phi = min_sup_distance(grid, grid[in_phi])
    core_mask = near_phi <= 1
    near_core = min_sup_distance(grid, grid[core_mask])
    core = tuple(a for a, k in zip(cover.centers, core_mask) if k)
    buffer_ = tuple(a for a, k in zip(cover.centers, near_core == 1) if k)
    ell = cover.ell
    ell_tau = floor_power(ell, tau)
    upsilon = _union_of_boxes(core + buffer_, ell, d)
    check = _union_of_boxes(buffer_, ell, d)
    thick = set()
    for a in buffer_:
        sub = box_sites(Box(a, ell))
        inner, _, _ = interior(sub, upsilon, 2 * ell_tau)
        thick.update(inner.sites)
    check_tau = Region(sorted(thick), d=d) if thick else Region(np.zeros((0, d), dtype=np.int64), d=d)
    return BufferedSubsetGeometry(
        phi=phi,
        core=core,
        buffer_centers=buffer_,
        upsilon=upsilon,
        check=check,
        check_tau=check_tau,
        hat=upsilon.difference(check),
        hat_tau=upsilon.difference(check_tau),
        ell=ell,
        ell_tau=ell_tau,
        parent=cover.parent,
    )


def is_connected(region: Region) -> bool:
    """Connectivity of ``region`` under nearest-neighbour adjacency of Z^d."""
    n = len(region)
    if n <= 1:
        return True
    pairs = region.neighbor_pairs
    adj = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return bool(seen.all())
