"""Shifted dyadic meshes, tiles, quadtiles and their orderings.

All geometry is exact: endpoints are Fractions with denominators 3 * 2^m, so
the one-third shifts never round.  Intervals are open and are passed around as
(lo, hi) pairs when no mesh structure is needed.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

log = logging.getLogger(__name__)

SHIFTS = (Fraction(0), Fraction(1, 3), Fraction(2, 3))
TWO = Fraction(2)


def _as_shift(sigma):
    s = Fraction(sigma).limit_denominator(3) if isinstance(sigma, float) else Fraction(sigma)
    if s not in SHIFTS:
        raise ValueError(f"shift must be one of 0, 1/3, 2/3, got {sigma}")
    return s


def mesh_interval(j, k, sigma=0):
    """Endpoints of 2^j (k + (0, 1) + (-1)^j sigma)."""
    sigma = _as_shift(sigma)
    scale = TWO**j
    offset = k + (sigma if j % 2 == 0 else -sigma)
    return scale * offset, scale * (offset + 1)


def dilate(iv, c):
    """c-fold dilate of an interval about its centre."""
    lo, hi = iv
    c = Fraction(c)
    mid = (lo + hi) / 2
    half = (hi - lo) / 2 * c
    return mid - half, mid + half


def contains(outer, inner):
    return outer[0] <= inner[0] and inner[1] <= outer[1]


def intersects(a, b):
    return a[0] < b[1] and b[0] < a[1]


def minkowski_sum(*ivs):
    return sum(iv[0] for iv in ivs), sum(iv[1] for iv in ivs)


def negate(iv):
    return -iv[1], -iv[0]


@dataclass(frozen=True, order=True)
class ShiftedDyadicInterval:
    j: int
    k: int
    sigma: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "sigma", _as_shift(self.sigma))

    @property
    def bounds(self):
        return mesh_interval(self.j, self.k, self.sigma)

    @property
    def length(self):
        return TWO**self.j

    @property
    def center(self):
        lo, hi = self.bounds
        return (lo + hi) / 2

    def dilate(self, c):
        return dilate(self.bounds, c)

    @classmethod
    def containing(cls, x, j, sigma=0):
        """The mesh interval at scale j whose closure contains x (left-closed choice)."""
        sigma = _as_shift(sigma)
        shift = sigma if j % 2 == 0 else -sigma
        k = math.floor(Fraction(x) / TWO**j - shift)
        return cls(j, k, sigma)


@dataclass(frozen=True, order=True)
class ShiftedDyadicCube:
    j: int
    k: tuple
    sigma: tuple

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        object.__setattr__(self, "sigma", tuple(_as_shift(s) for s in self.sigma))
        if len(self.k) != len(self.sigma):
            raise ValueError("position and shift must have the same dimension")

    @property
    def dim(self):
        return len(self.k)

    @property
    def sides(self):
        return tuple(ShiftedDyadicInterval(self.j, k, s) for k, s in zip(self.k, self.sigma))

    @property
    def side_length(self):
        return TWO**self.j


def _exact(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def find_enclosing_shifted_cube(cube, max_extra_scales=8):
    """A shifted dyadic cube Q' with cube inside its 7/10 dilate and comparable size.

    ``cube`` is a sequence of (lo, hi) sides (n <= 4).  Scales are tried from
    the smallest one whose 7/10 core can hold the side, upwards; at each scale
    every coordinate independently tries the three shifts.
    """
    sides = [(_exact(lo), _exact(hi)) for lo, hi in cube]
    if not sides or len(sides) > 4:
        raise ValueError("cube must have between 1 and 4 sides")
    width = max(hi - lo for lo, hi in sides)
    if width <= 0 or any(hi <= lo for lo, hi in sides):
        raise ValueError("cube must be nondegenerate")
    j0 = math.ceil(math.log2(width / Fraction(7, 10)))
    while TWO**(j0 - 1) * Fraction(7, 10) >= width:
        j0 -= 1
    while TWO**j0 * Fraction(7, 10) < width:
        j0 += 1
    for j in range(j0, j0 + max_extra_scales):
        ks, sigmas = [], []
        for side in sides:
            center = (side[0] + side[1]) / 2
            for sigma in SHIFTS:
                cand = ShiftedDyadicInterval.containing(center, j, sigma)
                if contains(cand.dilate(Fraction(7, 10)), side):
                    ks.append(cand.k)
                    sigmas.append(sigma)
                    break
            else:
                break
        if len(ks) == len(sides):
            return ShiftedDyadicCube(j, tuple(ks), tuple(sigmas))
    raise RuntimeError(f"no enclosing shifted cube found for {cube}")


SPARSE_SCALE_GAP = 30  # smallest m with 2^m > 10^9
SPARSE_SEPARATION = 10**9


def _conflict(a, b):
    """True when two distinct same-grid cubes violate the sparseness condition."""
    if a == b:
        return False
    if a.j != b.j:
        return abs(a.j - b.j) < SPARSE_SCALE_GAP
    # 10^9-dilates of equal open cubes are disjoint iff some coordinate
    # separates the centres by at least 10^9 side lengths
    return all(abs(x - y) < SPARSE_SEPARATION for x, y in zip(a.k, b.k))


def _check_one_grid(cubes):
    shifts = {c.sigma for c in cubes}
    if len(shifts) > 1:
        raise ValueError("cubes come from different shifted grids")


def is_sparse(cubes):
    cubes = list(dict.fromkeys(cubes))
    _check_one_grid(cubes)
    return not any(_conflict(a, b) for a, b in itertools.combinations(cubes, 2))


def split_sparse(cubes):
    """Greedy first-fit partition into sparse sub-collections.

    Cubes are visited in (scale, position) order and each goes into the first
    part it does not conflict with.  Repeated cubes travel together.
    """
    cubes = list(cubes)
    _check_one_grid(cubes)
    parts = []
    for cube in sorted(dict.fromkeys(cubes)):
        for part in parts:
            if not any(_conflict(cube, other) for other in part):
                part.append(cube)
                break
        else:
            parts.append([cube])
    counts = {c: 0 for c in cubes}
    for c in cubes:
        counts[c] += 1
    return [[c for c in part for _ in range(counts[c])] for part in parts]


@dataclass(frozen=True, order=True)
class Tile:
    I: ShiftedDyadicInterval
    omega: ShiftedDyadicInterval

    def __post_init__(self):
        if self.I.sigma != 0:
            raise ValueError("time intervals come from the unshifted mesh")
        if self.I.j != -self.omega.j:
            raise ValueError("a tile has area 1")


def order_lt(p_prime, p):
    """P' < P: I' strictly inside I and 5 omega_P inside 5 omega_P'."""
    ip, i = p_prime.I.bounds, p.I.bounds
    return (
        contains(i, ip)
        and ip != i
        and contains(p_prime.omega.dilate(5), p.omega.dilate(5))
    )


def order_leq(p_prime, p):
    return p_prime == p or order_lt(p_prime, p)


def order_lesssim(p_prime, p):
    return contains(p.I.bounds, p_prime.I.bounds) and contains(
        p_prime.omega.dilate(10**7), p.omega.dilate(10**7)
    )


def order_lesssim_prime(p_prime, p):
    return order_lesssim(p_prime, p) and not order_leq(p_prime, p)


@dataclass(frozen=True, order=True)
class QuadTile:
    tiles: tuple
    # frequency boxes the tiles were built around; not part of identity
    sources: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.tiles) != 4:
            raise ValueError("a quadtile has four tiles")
        if len({t.I for t in self.tiles}) != 1:
            raise ValueError("all tiles of a quadtile share the time interval")

    def __getitem__(self, position):
        """1-based access, P[1] .. P[4]."""
        return self.tiles[position - 1]

    @property
    def I(self):
        return self.tiles[0].I

    @property
    def shift(self):
        return tuple(t.omega.sigma for t in self.tiles)

    @property
    def frequency_cube(self):
        return ShiftedDyadicCube(self.tiles[0].omega.j, tuple(t.omega.k for t in self.tiles), self.shift)


@dataclass(frozen=True)
class RankViolation:
    bullet: int
    first: int
    second: int
    detail: str


DEFAULT_PARTITION = ((2, 3, 4), (1,))


def _paraproduct_separated(p_prime, p):
    return not intersects(p_prime.omega.bounds, p.omega.bounds)


def _good_for_pair(p_prime, p, i, para):
    return [
        t for t in range(1, 5) if t != i and (
            _paraproduct_separated(p_prime[t], p[t]) if t == para
            else order_lesssim_prime(p_prime[t], p[t])
        )
    ]


def _time_spans(quads):
    # time intervals are unshifted dyadic, so float endpoints are exact
    return [(float(q.I.bounds[0]), float(q.I.bounds[1])) for q in quads]


def good_indices(collection, partition=DEFAULT_PARTITION):
    """Good indices with respect to each position of the trio, for the whole collection.

    Index t is good with respect to i when every pair with P'_i <= P_i and a
    10^9 scale gap has t among its good indices.  With no such pair the
    condition is vacuous and every t != i is good.
    """
    (trio, (para,)) = partition
    quads = list(collection)
    spans = _time_spans(quads)
    good = {i: set(range(1, 5)) - {i} for i in trio}
    for a, b in itertools.permutations(range(len(quads)), 2):
        P, Pp = quads[a], quads[b]
        if not 10**9 * Pp.I.length < P.I.length:
            continue
        if not (spans[a][0] <= spans[b][0] and spans[b][1] <= spans[a][1]):
            continue
        for i in trio:
            if order_leq(Pp[i], P[i]):
                good[i] &= set(_good_for_pair(Pp, P, i, para))
    return {i: frozenset(g) for i, g in good.items()}


def rank10_check(collection, partition=DEFAULT_PARTITION):
    """Check the three rank (1, 0) conditions over all ordered pairs.

    Returns (ok, violations) where violations lists every failing pair with
    the bullet it fails.  Indices in ``partition`` are 1-based tile positions.
    """
    (trio, (para,)) = partition
    if sorted(trio + (para,)) != [1, 2, 3, 4]:
        raise ValueError(f"{partition} does not split positions 1..4")
    quads = list(collection)
    if not quads:
        raise ValueError("collection is empty")
    spans = _time_spans(quads)
    violations = []
    for a, b in itertools.permutations(range(len(quads)), 2):
        P, Pp = quads[a], quads[b]
        if P == Pp:
            continue
        same = [i for i in trio if P[i] == Pp[i]]
        if same:
            violations.append(RankViolation(1, a, b, f"tiles at {same} coincide"))
        if P.I == Pp.I and P[para] != Pp[para]:
            violations.append(RankViolation(1, a, b, f"equal time interval, different tile {para}"))
        if not (spans[a][0] <= spans[b][0] and spans[b][1] <= spans[a][1]):
            continue  # every order below needs I' inside I
        for i in trio:
            if not order_leq(Pp[i], P[i]):
                continue
            bad = [k for k in range(1, 5) if not order_lesssim(Pp[k], P[k])]
            if bad:
                violations.append(RankViolation(2, a, b, f"P'_{i} <= P_{i} but not lesssim at {bad}"))
            if 10**9 * Pp.I.length < P.I.length:
                good = _good_for_pair(Pp, P, i, para)
                if len(good) < 2:
                    violations.append(RankViolation(3, a, b, f"P'_{i} <= P_{i}; good indices {good}"))
    return not violations, violations


# ---------------------------------------------------------------------------
# case collections

BOX_SCALE_DROP = 3  # source boxes are 2^-3 of the tile frequency length


def _enclosing_interval(box, j, preferred=None):
    """Mesh intervals at scale j with box inside the 7/10 core, one per working shift."""
    center = (box[0] + box[1]) / 2
    found = {}
    for sigma in SHIFTS:
        cand = ShiftedDyadicInterval.containing(center, j, sigma)
        if contains(cand.dilate(Fraction(7, 10)), box):
            found[sigma] = cand
    return found


def case_geometry(case, beta):
    """Offsets (in units of the tile frequency length) used to place the boxes.

    Returns (xi1 offsets, offset of beta*xi2 + xi3 from the line).
    """
    beta = Fraction(beta).limit_denominator(10**6)
    spread = 3 * (abs(beta) + 1) + 4
    if case == 1:
        return (Fraction(40), Fraction(-40)), (Fraction(0),)
    if case == 2:
        return (Fraction(0),), (spread, -spread)
    if case == 3:
        return (Fraction(40), Fraction(-40)), (Fraction(40) + spread, -(Fraction(40) + spread))
    raise ValueError(f"case must be 1, 2 or 3, got {case}")


def _quadtile_candidates(case, beta, J, l):
    """All quadtiles realisable at tile scale J and time position l."""
    L = TWO**J
    b = L / TWO**BOX_SCALE_DROP
    beta_q = Fraction(beta).limit_denominator(10**6)
    xi1_offsets, line_offsets = case_geometry(case, beta)
    I = ShiftedDyadicInterval(-J, l, 0)
    out = []
    for a1 in xi1_offsets:
        for d in line_offsets:
            c1 = a1 * L
            c2 = Fraction(0)
            c3 = -beta_q * c2 + d * L
            boxes = [(c - b / 2, c + b / 2) for c in (c1, c2, c3)]
            s = negate(minkowski_sum(*(dilate(bx, Fraction(9, 10)) for bx in boxes)))
            choices = [_enclosing_interval(bx, J) for bx in boxes]
            c4 = (s[0] + s[1]) / 2
            found4 = {}
            for sigma in SHIFTS:
                cand = ShiftedDyadicInterval.containing(c4, J, sigma)
                if contains(cand.dilate(Fraction(7, 10)), s):
                    found4[sigma] = cand
            choices.append(found4)
            if not all(choices):
                continue
            # deterministic choice: smallest working shift in each slot
            omegas = [ch[min(ch)] for ch in choices]
            tiles = tuple(Tile(I, w) for w in omegas)
            out.append(QuadTile(tiles, sources=tuple(boxes) + (s,)))
    return out


def generate_case_collection(case, beta, scales=(0, 30), positions=4, seed=0):
    """Quadtiles following the frequency geometry of one of the three cases.

    ``scales`` are tile scales J (frequency length 2^J, time length 2^-J).
    For each scale, ``positions`` time intervals are drawn inside the coarsest
    time interval so that cross-scale comparisons actually occur.
    Case 1 puts xi1 far out and (xi2, xi3) on the line beta*xi2 + xi3 = 0;
    case 2 keeps xi1 near 0 and moves a few units off the line; case 3 moves
    both far out.  The source boxes are kept on each quadtile.
    """
    if case not in (1, 2, 3):
        raise ValueError(f"case must be 1, 2 or 3, got {case}")
    if Fraction(beta).limit_denominator(10**6) in (0, 1):
        raise ValueError("beta must not be 0 or 1")
    rng = np.random.default_rng(seed)
    scales = sorted(scales)
    quads = []
    for J in scales:
        depth = J - scales[0]
        count = min(positions, 2**depth)
        ls = set()
        while len(ls) < count:
            # time intervals nest inside the coarsest one, [0, 2^-J0)
            r = int(rng.integers(0, 2 ** min(depth, 62), endpoint=False)) if depth else 0
            ls.add(r << max(depth - 62, 0))
        for l in sorted(ls):
            quads.extend(_quadtile_candidates(case, beta, J, l))
    return quads


def refine_collection(quads):
    """Split a collection by shift and then into sparse parts.

    Returns a list of sub-collections, each with a single shift and a sparse
    set of frequency cubes.  The part count is the refinement count.
    """
    by_shift = {}
    for q in quads:
        by_shift.setdefault(q.shift, []).append(q)
    parts = []
    for shift in sorted(by_shift):
        group = by_shift[shift]
        cubes = [q.frequency_cube for q in group]
        for sub in split_sparse(cubes):
            members = set(sub)
            parts.append([q for q in group if q.frequency_cube in members])
    log.debug("refined %d quadtiles into %d parts", len(quads), len(parts))
    return parts


def source_containment_holds(quad):
    """(9/10)Q1 + (9/10)Q2 + (9/10)Q3 inside -(7/10)Q4 for the stored source boxes,
    and each source box inside the 7/10 core of its tile."""
    q1, q2, q3, _ = quad.sources
    s = minkowski_sum(*(dilate(q, Fraction(9, 10)) for q in (q1, q2, q3)))
    core4 = negate(quad[4].omega.dilate(Fraction(7, 10)))
    in_tiles = all(
        contains(quad[i].omega.dilate(Fraction(7, 10)), box)
        for i, box in zip((1, 2, 3), (q1, q2, q3))
    )
    return contains(core4, s) and in_tiles
