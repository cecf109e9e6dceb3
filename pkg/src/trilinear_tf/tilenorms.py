"""Trees, friend sets, size and energy, and the discrete model form.

A "tree family" for position j is every one-quadtile tree together with the
i-trees (i in 2..4, i != j) for which j is a good index with respect to i.
Size, the John-Nirenberg form, energy and the stratification all range over
that family, and sub-trees in the energy constraint are taken from it too.

Geometry is exact: interval endpoints are Fractions, rescaled to a common
integer denominator before any pairwise comparison.
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .dyadic import DEFAULT_PARTITION, QuadTile, generate_case_collection, good_indices, intersects
from .wavepacket import DEFAULT_PROFILE, coefficient_array

log = logging.getLogger(__name__)

TREE_TYPES = (2, 3, 4)
EXHAUSTIVE_LIMIT = 12
JOHN_NIRENBERG_RANGE = (1 / 16, 16)


def friends(n):
    """Fr(n): unit offsets reached by n-shifted dyadic subintervals of [0, 1)."""
    n = int(n)
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    out = set()
    k = 0
    while True:
        lo, hi = n >> k, (n + (1 << k) - 1) >> k
        out.update((lo, hi))
        if lo == 0 and hi <= 1:
            return frozenset(out)
        k += 1


# ---------------------------------------------------------------------------
# trees and coefficient sequences


@dataclass(frozen=True)
class Tree:
    top: QuadTile
    members: frozenset
    tree_type: int

    def __post_init__(self):
        if self.tree_type not in TREE_TYPES:
            raise ValueError(f"tree type must be 2, 3 or 4, got {self.tree_type}")
        if not self.members:
            raise ValueError("a tree needs at least one member")

    @property
    def length(self):
        return float(self.top.I.length)

    def is_singleton(self):
        return self.members == frozenset([self.top])


class CoefficientSequence:
    """Complex coefficients a_{P_j}, one row per quadtile and one column per position."""

    def __init__(self, collection, values):
        self.collection = tuple(collection)
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(self.collection), 4):
            raise ValueError(f"expected shape {(len(self.collection), 4)}, got {values.shape}")
        self.values = values
        self.index = {q: k for k, q in enumerate(self.collection)}
        if len(self.index) != len(self.collection):
            raise ValueError("collection has repeated quadtiles")

    @classmethod
    def from_functions(cls, collection, fs, shifts=(0, 0, 0), p=2.0, profile=DEFAULT_PROFILE):
        """a_{P_j} = <f_j, phi_{P_j^{n_j}, j}> with n_4 = 0."""
        if len(fs) != 4 or len(shifts) != 3:
            raise ValueError("need four functions and three shifts")
        quads = tuple(collection)
        ns = tuple(shifts) + (0,)
        cols = [coefficient_array(f, quads, j, n, p, profile) for j, f, n in zip(range(1, 5), fs, ns)]
        values = np.stack(cols, axis=1) if quads else np.zeros((0, 4), complex)
        return cls(quads, values)

    def column(self, j, quads=None):
        if j not in (1, 2, 3, 4):
            raise ValueError(f"position must be 1..4, got {j}")
        if quads is None:
            col = self.values[:, j - 1]
        else:
            try:
                rows = [self.index[q] for q in quads]
            except KeyError as exc:
                raise ValueError(f"no coefficients for quadtile {exc.args[0]}") from None
            col = self.values[rows, j - 1]
        if np.isnan(col).any():
            raise ValueError(f"missing coefficients at position {j}")
        return col

    def scaled(self, lam):
        return CoefficientSequence(self.collection, lam * self.values)


# ---------------------------------------------------------------------------
# pairwise geometry


def _integer_bounds(intervals):
    """(lo, hi) Fraction pairs -> object array of exact integers on a common grid."""
    fracs = [Fraction(x) for iv in intervals for x in iv]
    den = math.lcm(*(f.denominator for f in fracs)) if fracs else 1
    return np.array([int(f * den) for f in fracs], dtype=object).reshape(-1, 2)


def _contains_matrix(outer, inner):
    """M[a, b] = inner[b] inside outer[a]."""
    return ((outer[:, None, 0] <= inner[None, :, 0]) & (inner[None, :, 1] <= outer[:, None, 1])).astype(bool)


def _meets_matrix(a, b):
    """M[x, y] = open intervals a[x] and b[y] intersect."""
    return ((a[:, None, 0] < b[None, :, 1]) & (b[None, :, 0] < a[:, None, 1])).astype(bool)


class _Geometry:
    """Order relations and overlaps for a fixed tuple of quadtiles, computed once."""

    def __init__(self, quads):
        self.quads = quads
        self.n = len(quads)
        self.lengths = np.array([float(q.I.length) for q in quads])
        self.starts = np.array([float(q.I.bounds[0]) for q in quads])
        times = _integer_bounds([q.I.bounds for q in quads])
        self.time_contains = _contains_matrix(times, times)
        self.time_equal = self.time_contains & self.time_contains.T
        self.meets = _meets_matrix(times, times)
        self._leq = {}
        self._overlap2 = {}
        self._tile_ids = {}
        self._freq = {}

    def leq(self, i):
        """L[t, m] = P_{m,i} <= P_{t,i}: row t is the maximal i-tree with top t."""
        if i not in self._leq:
            ids = self.tile_ids(i)
            same = ids[:, None] == ids[None, :]
            five = _integer_bounds([q[i].omega.dilate(5) for q in self.quads])
            # P' < P needs I' strictly inside I and 5 omega_P inside 5 omega_P'
            strict = self.time_contains & ~self.time_equal & _contains_matrix(five, five).T
            self._leq[i] = same | strict
        return self._leq[i]

    def overlap2(self, j):
        if j not in self._overlap2:
            two = _integer_bounds([q[j].omega.dilate(2) for q in self.quads])
            self._overlap2[j] = _meets_matrix(two, two)
        return self._overlap2[j]

    def tile_ids(self, j):
        if j not in self._tile_ids:
            seen = {}
            self._tile_ids[j] = np.array([seen.setdefault(q[j], len(seen)) for q in self.quads])
        return self._tile_ids[j]

    def frequency_starts(self, j):
        if j not in self._freq:
            self._freq[j] = np.array([float(q[j].omega.bounds[0]) for q in self.quads])
        return self._freq[j]


@lru_cache(maxsize=64)
def _geometry(quads):
    return _Geometry(quads)


def _certificate(quads, certificate):
    return good_indices(quads, DEFAULT_PARTITION) if certificate is None else certificate


def tree_types(j, certificate):
    """Tree types admitted in the family for position j."""
    return tuple(i for i in TREE_TYPES if i != j and j in certificate.get(i, ()))


def enumerate_trees(collection, i, j=None, certificate=None):
    """Maximal i-trees over every top in the collection, plus one-quadtile trees.

    With ``j`` given, the maximal trees are kept only when j is a good index
    with respect to i.
    """
    quads = tuple(collection)
    if not quads:
        return []
    geo = _geometry(quads)
    keep_maximal = True
    if j is not None:
        keep_maximal = i in tree_types(j, _certificate(quads, certificate))
    trees, seen = [], set()

    def add(top, mask):
        members = frozenset(quads[m] for m in np.flatnonzero(mask))
        key = (top, members)
        if key not in seen:
            seen.add(key)
            trees.append(Tree(quads[top], members, i))

    leq = geo.leq(i)
    for t in range(len(quads)):
        if keep_maximal:
            add(t, leq[t])
        add(t, np.arange(len(quads)) == t)
    return trees


# ---------------------------------------------------------------------------
# size and the John-Nirenberg variant


def _weights(coeffs, quads, j):
    return np.abs(coeffs.column(j, quads)) ** 2


def _size_sq(geo, w, types, tops=None):
    """Largest |I_T|^-1 sum |a|^2 over the tree family, by top."""
    tops = np.arange(geo.n) if tops is None else np.asarray(tops)
    if geo.n == 0:
        return 0.0
    best = float(np.max(w / geo.lengths))
    for i in types:
        avg = (geo.leq(i) @ w) / geo.lengths
        best = max(best, float(np.max(avg[tops])) if tops.size else 0.0)
    return best


def size_j(coeffs, collection, j, certificate=None):
    quads = tuple(collection)
    if not quads:
        return 0.0
    geo = _geometry(quads)
    types = tree_types(j, _certificate(quads, certificate))
    return math.sqrt(_size_sq(geo, _weights(coeffs, quads, j), types))


def _weak_l1(starts, ends, w, lo, hi):
    """||(sum w_k 1_{I_k}/|I_k|)^{1/2}||_{L^{1,inf}(lo, hi)} by exact level sets."""
    cuts = np.unique(np.clip(np.concatenate([[lo, hi], starts, ends]), lo, hi))
    density = np.zeros(len(cuts) - 1)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    for s, e, wk in zip(starts, ends, w):
        density[(mids > s) & (mids < e)] += wk / (e - s)
    values = np.sqrt(density)
    widths = np.diff(cuts)
    order = np.argsort(-values, kind="stable")
    # measure of {F >= v_k} for each attained value, largest first
    measure = np.cumsum(widths[order])
    return float(np.max(values[order] * measure)) if len(values) else 0.0


def weak_l1_size(coeffs, tree, j):
    """|I_T|^-1 of the weak-L^1 norm of the tree's square function on I_T."""
    members = sorted(tree.members)
    w = _weights(coeffs, members, j)
    starts = np.array([float(q.I.bounds[0]) for q in members])
    ends = np.array([float(q.I.bounds[1]) for q in members])
    lo, hi = (float(x) for x in tree.top.I.bounds)
    return _weak_l1(starts, ends, w, lo, hi) / (hi - lo)


def _family(quads, j, certificate):
    cert = _certificate(quads, certificate)
    trees = []
    for i in tree_types(j, cert) or (TREE_TYPES[0],):
        trees.extend(enumerate_trees(quads, i, j, cert))
    return trees


def john_nirenberg_check(coeffs, collection, j, certificate=None):
    """sup over the tree family of the weak-L^1 form, divided by size.

    Both sides vanish together; that case returns 1.
    """
    quads = tuple(collection)
    size = size_j(coeffs, quads, j, certificate)
    if size == 0:
        return 1.0
    weak = max(weak_l1_size(coeffs, t, j) for t in _family(quads, j, certificate))
    return weak / size


def strongly_disjoint_check(trees, j):
    """Pairwise strong j-disjointness, including the 2 omega clause."""
    for T, U in itertools.combinations(trees, 2):
        for P in T.members:
            for Q in U.members:
                if P[j] == Q[j]:
                    return False
                if intersects(P[j].omega.dilate(2), Q[j].omega.dilate(2)) and (
                    intersects(Q.I.bounds, T.top.I.bounds) or intersects(P.I.bounds, U.top.I.bounds)
                ):
                    return False
    return True


# ---------------------------------------------------------------------------
# energy


@dataclass(frozen=True)
class _Candidate:
    top: int
    mask: np.ndarray
    tree_type: int


def _disjoint_from(geo, j, cand, chosen):
    ids = geo.tile_ids(j)
    over = geo.overlap2(j)
    rows = np.flatnonzero(cand.mask)
    for other in chosen:
        cols = np.flatnonzero(other.mask)
        if np.intersect1d(ids[rows], ids[cols]).size:
            return False
        clash = over[np.ix_(rows, cols)] & (
            geo.meets[cand.top][cols][None, :] | geo.meets[other.top][rows][:, None]
        )
        if clash.any():
            return False
    return True


def _subtree_peak(geo, w, masks, types):
    """Largest sub-tree average inside each member mask (rows of ``masks``)."""
    weighted = masks * w[None, :]
    peak = np.max(weighted / geo.lengths[None, :], axis=1)  # one-quadtile sub-trees
    for k in types:
        peak = np.maximum(peak, np.max((weighted @ geo.leq(k).T) / geo.lengths[None, :], axis=1))
    return peak


def _priority(geo, j, top, tree_type):
    # larger |I_T| first, then leftmost, then lowest frequency
    return (-geo.lengths[top], geo.starts[top], geo.frequency_starts(j)[top], tree_type, top)


def _maximal_candidates(geo, w, types, alive):
    """Maximal trees inside ``alive`` for every top and type, then one-quadtile trees."""
    out = []
    for i in types:
        masks = geo.leq(i) & alive[None, :]
        out.append((i, masks))
    out.append((None, np.diag(alive)))
    return out


def _peel(geo, w, j, types, alive, threshold, strict=True):
    """Extract trees whose average passes ``threshold`` until none is left.

    Each step takes the admissible maximal tree with the best priority and
    then clears every tile under its top, whatever the tree type, which is
    what keeps successive picks strongly disjoint.  Returns the picks as
    (top, type, tree mask, cleared mask) and the surviving tiles.
    """
    alive = alive.copy()
    picks = []
    while True:
        best = None
        for i, masks in _maximal_candidates(geo, w, types, alive):
            sums = masks @ w
            hit = sums > threshold * geo.lengths if strict else sums >= threshold * geo.lengths
            for t in np.flatnonzero(alive & hit & masks.any(axis=1)):
                key = _priority(geo, j, t, i or TREE_TYPES[0])
                if best is None or key < best[0]:
                    best = (key, int(t), masks[t], i or TREE_TYPES[0])
        if best is None:
            return picks, alive
        _, t, mask, i = best
        cleared = mask.copy()
        for k in TREE_TYPES:
            cleared |= geo.leq(k)[t] & alive
        picks.append((t, i, mask, cleared))
        alive &= ~cleared


def _greedy_level(geo, w, j, types, n, top_level):
    """Best of three greedy passes at level n.

    The passes run on the whole collection, after pruning heavy trees, and
    by peeling (heavy trees discarded, then trees at level n extracted).
    Every pass returns an admissible family, so the best one is too.
    """
    hi = 4.0 ** (n + 1)
    everything = np.ones(geo.n, bool)
    passes = [_greedy_pass(geo, w, j, types, n, everything)]
    light = everything
    # discard heavy trees one level at a time from the top, as the stratification does
    for k in range(top_level, n, -1):
        _, light = _peel(geo, w, j, types, light, 4.0**k)
    passes.append(_greedy_pass(geo, w, j, types, n, light))
    picks, _ = _peel(geo, w, j, types, light, 4.0**n, strict=False)
    peeled = []
    for t, i, mask, _ in picks:
        cand = _Candidate(t, mask, i)
        if _subtree_peak(geo, w, mask[None, :], types)[0] <= hi and _disjoint_from(geo, j, cand, peeled):
            peeled.append(cand)
    passes.append(peeled)
    return max(passes, key=lambda chosen: sum(geo.lengths[c.top] for c in chosen))


def _greedy_pass(geo, w, j, types, n, alive):
    lo, hi = 4.0**n, 4.0 ** (n + 1)
    alive = alive.copy()
    chosen = []
    while alive.any():
        admissible = []
        for i, masks in _maximal_candidates(geo, w, types, alive):
            sums = masks @ w
            ok = (sums >= lo * geo.lengths) & masks.any(axis=1)
            if not ok.any():
                continue
            rows = np.flatnonzero(ok)
            peak = _subtree_peak(geo, w, masks[rows], types)
            for t in rows[peak <= hi]:
                admissible.append(_Candidate(int(t), masks[t], i or TREE_TYPES[0]))
        admissible.sort(key=lambda c: _priority(geo, j, c.top, c.tree_type))
        pick = next((c for c in admissible if _disjoint_from(geo, j, c, chosen)), None)
        if pick is None:
            break
        chosen.append(pick)
        alive &= ~pick.mask
    return chosen


def _minimal_sets(members, w, need):
    """Inclusion-minimal subsets of ``members`` whose weight reaches ``need``."""
    members = [m for m in members if w[m] > 0]
    out = []
    for r in range(1, len(members) + 1):
        for combo in itertools.combinations(members, r):
            total = sum(w[m] for m in combo)
            if total >= need and all(total - w[m] < need for m in combo):
                out.append(combo)
    return out


def _exhaustive_level(geo, w, j, types, n, top_level):
    lo, hi = 4.0**n, 4.0 ** (n + 1)
    cands = {}
    for i in types:
        leq = geo.leq(i)
        for t in range(geo.n):
            for combo in _minimal_sets(np.flatnonzero(leq[t]), w, lo * geo.lengths[t]):
                cands.setdefault((t, combo), i)
    for m in range(geo.n):
        if w[m] >= lo * geo.lengths[m]:
            cands.setdefault((m, (m,)), TREE_TYPES[0])
    pool = []
    for (t, combo), i in cands.items():
        mask = np.zeros(geo.n, bool)
        mask[list(combo)] = True
        if _subtree_peak(geo, w, mask[None, :], types)[0] <= hi:
            pool.append(_Candidate(t, mask, i))
    pool.sort(key=lambda c: _priority(geo, j, c.top, c.tree_type))
    k = len(pool)
    compatible = np.ones((k, k), bool)
    for a, b in itertools.combinations(range(k), 2):
        compatible[a, b] = compatible[b, a] = _disjoint_from(geo, j, pool[a], [pool[b]])
    weight = np.array([geo.lengths[c.top] for c in pool])
    best = [0.0, []]

    def search(picked, allowed, total):
        if total > best[0]:
            best[0], best[1] = total, list(picked)
        rest = np.flatnonzero(allowed)
        if total + weight[rest].sum() <= best[0]:
            return
        for r in rest:
            allowed = allowed.copy()
            allowed[r] = False
            search(picked + [r], allowed & compatible[r], total + weight[r])
            if total + weight[allowed].sum() <= best[0]:
                return

    search([], np.ones(k, bool), 0.0)
    return [pool[r] for r in best[1]]


def energy_levels(w, lengths, peak_avg):
    """Dyadic levels n whose admissible tree families can be nonempty."""
    nz = w > 0
    if not nz.any() or peak_avg <= 0:
        return range(0)
    r_min = math.sqrt(float(np.min(w[nz] / lengths[nz])))
    return range(math.floor(math.log2(r_min)) - 1, math.floor(0.5 * math.log2(peak_avg)) + 1)


@dataclass(frozen=True)
class EnergyResult:
    value: float
    level: int
    trees: tuple


def _energy(quads, w, j, mode, certificate):
    geo = _geometry(quads)
    types = tree_types(j, _certificate(quads, certificate))
    if mode == "exhaustive" and len(quads) > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive energy is limited to {EXHAUSTIVE_LIMIT} quadtiles, got {len(quads)}")
    if mode not in ("greedy", "exhaustive"):
        raise ValueError(f"mode must be greedy or exhaustive, got {mode!r}")
    select = _greedy_level if mode == "greedy" else _exhaustive_level
    best = EnergyResult(0.0, 0, ())
    levels = energy_levels(w, geo.lengths, _size_sq(geo, w, types) if quads else 0.0)
    for n in levels:
        chosen = select(geo, w, j, types, n, levels[-1])
        value = 2.0**n * math.sqrt(sum(geo.lengths[c.top] for c in chosen))
        if value > best.value:
            trees = tuple(
                Tree(quads[c.top], frozenset(quads[m] for m in np.flatnonzero(c.mask)), c.tree_type)
                for c in chosen
            )
            best = EnergyResult(value, n, trees)
    return best


def energy_j(coeffs, collection, j, mode="greedy", certificate=None, details=False):
    """sup over n of 2^n (sum |I_T|)^{1/2} over strongly j-disjoint admissible families.

    ``details=True`` returns an EnergyResult with the maximizing level and trees.
    """
    quads = tuple(collection)
    result = _energy(quads, _weights(coeffs, quads, j) if quads else np.zeros(0), j, mode, certificate)
    return result if details else result.value


# ---------------------------------------------------------------------------
# the model form and the single-tree lemma


def lambda_from_coefficients(coeffs, collection=None):
    quads = coeffs.collection if collection is None else tuple(collection)
    if not quads:
        return 0j
    lengths = np.array([float(q.I.length) for q in quads])
    prod = np.prod([coeffs.column(j, quads) for j in range(1, 5)], axis=0)
    return complex(np.sum(prod / lengths))


def lambda_form(collection, fs, shifts=(0, 0, 0), p=2.0, profile=DEFAULT_PROFILE):
    """sum_P |I_P|^-1 prod_j <f_j, phi_{P_j^{n_j}, j}>, with n_4 = 0."""
    quads = tuple(collection)
    if not quads:
        return 0j
    return lambda_from_coefficients(CoefficientSequence.from_functions(quads, fs, shifts, p, profile))


def single_tree_bound_check(coeffs, tree):
    """|I_T| prod_j size_j(T) minus sum_{P in T} |I_P|^-1 prod_j |a_{P_j}|."""
    members = tuple(sorted(tree.members))
    quads = members if tree.top in tree.members else members + (tree.top,)
    geo = _geometry(quads)
    cert = good_indices(quads)
    rhs = float(tree.top.I.length)
    lhs_terms = np.ones(len(members)) / geo.lengths[: len(members)]
    for j in range(1, 5):
        a = np.abs(coeffs.column(j, members))
        lhs_terms = lhs_terms * a
        w = np.zeros(len(quads))
        w[: len(members)] = a**2
        rhs *= math.sqrt(_size_sq(geo, w, tree_types(j, cert)))
    return rhs - float(np.sum(lhs_terms))


# ---------------------------------------------------------------------------
# size-energy stratification


def _tree(quads, top, mask, tree_type):
    return Tree(quads[top], frozenset(quads[m] for m in np.flatnonzero(mask)), tree_type)


@dataclass(frozen=True)
class Stratum:
    """Quadtiles peeled at level n: trees with average in (ceiling/2, ceiling].

    ``trees`` are the selected trees, strongly disjoint by construction.
    ``cover`` adds, for each selected top, the trees of the other types under
    the same top that took the remaining cleared tiles.
    """

    n: int
    quads: tuple
    trees: tuple
    cover: tuple
    size: float
    ceiling: float
    size_bound: float
    ratio: float  # sum |I_T| over (E / ceiling)^2, i.e. over 2^{2n} with energy scaled to 1

    @property
    def tree_measure(self):
        return float(sum(t.length for t in self.trees))


@dataclass(frozen=True)
class Stratification:
    j: int
    energy: float
    scale: float  # smallest power of two >= energy; ceilings are scale / 2^n
    size: float
    strata: tuple
    residual: tuple  # zero-coefficient quadtiles left after the last stratum

    def bounds_hold(self, rtol=1e-12):
        return all(s.size <= s.size_bound * (1 + rtol) for s in self.strata)

    def fitted_constant(self):
        return max((s.ratio for s in self.strata), default=0.0)

    def to_dict(self):
        return {
            "j": self.j,
            "energy": self.energy,
            "scale": self.scale,
            "size": self.size,
            "residual": len(self.residual),
            "strata": [
                {
                    "n": s.n,
                    "quadtiles": len(s.quads),
                    "size": s.size,
                    "size_bound": s.size_bound,
                    "tree_count": len(s.trees),
                    "cover_count": len(s.cover),
                    "tree_measure": s.tree_measure,
                    "ratio": s.ratio,
                }
                for s in self.strata
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def size_energy_decompose(coeffs, collection, j, certificate=None):
    """Split the collection into strata of decreasing size, each covered by trees.

    Level n removes every tree whose average exceeds scale / 2^{n+1}; the
    scale is the greedy energy rounded up to a power of two, so each stratum's
    trees form an admissible family at a single dyadic energy level.
    """
    quads = tuple(collection)
    cert = _certificate(quads, certificate) if quads else {}
    geo = _geometry(quads)
    w = _weights(coeffs, quads, j) if quads else np.zeros(0)
    types = tree_types(j, cert)
    E = _energy(quads, w, j, "greedy", cert).value
    S = math.sqrt(_size_sq(geo, w, types)) if quads else 0.0
    if E == 0 or S == 0:
        empty = Stratum(0, (), (), (), 0.0, 0.0, 0.0, 0.0)
        return Stratification(j, E, 0.0, S, (empty,), quads)
    scale = 2.0 ** math.ceil(math.log2(E))

    alive = np.ones(geo.n, bool)

    def alive_size():
        return math.sqrt(_size_sq(geo, w * alive, types, tops=np.flatnonzero(alive)))

    strata, steps = [], 0
    size = alive_size()
    while size > 0:
        n = math.floor(math.log2(scale / size))
        while size > 2.0**-n * scale:
            n -= 1
        while size <= 2.0 ** (-n - 1) * scale:
            n += 1
        ceiling = 2.0**-n * scale
        picks, alive = _peel(geo, w, j, types, alive, (ceiling / 2) ** 2)
        steps += len(picks)
        if not picks or steps > 4 * geo.n:
            raise RuntimeError(f"stratification stalled at level {n} after {steps} extractions")
        removed = np.zeros(geo.n, bool)
        trees, cover = [], []
        for t, i, mask, cleared in picks:
            trees.append(_tree(quads, t, mask, i))
            cover.append(trees[-1])
            for k in TREE_TYPES:
                extra = cleared & geo.leq(k)[t] & ~mask & ~removed
                if k != i and extra.any():
                    cover.append(_tree(quads, t, extra, k))
                    removed |= extra
            removed |= cleared
        members = tuple(quads[m] for m in np.flatnonzero(removed))
        post = math.sqrt(_size_sq(_geometry(members), _weights(coeffs, members, j), types))
        measure = sum(geo.lengths[t] for t, _, _, _ in picks)
        strata.append(Stratum(
            n, members, tuple(trees), tuple(cover), post, ceiling, min(ceiling, S), measure * (ceiling / E) ** 2
        ))
        size = alive_size()
    residual = tuple(quads[m] for m in np.flatnonzero(alive))
    return Stratification(j, E, scale, S, tuple(strata), residual)


# ---------------------------------------------------------------------------
# the composite size-energy inequality


def _check_thetas(thetas):
    if len(thetas) != 3 or any(not 0 <= t < 1 for t in thetas) or abs(sum(thetas) - 1) > 1e-12:
        raise ValueError(f"thetas must lie in [0, 1) and sum to 1, got {thetas}")


def size_energy_ratio(coeffs, thetas=(1 / 3, 1 / 3, 1 / 3), collection=None, certificate=None):
    """|Lambda| / (size_1 prod_{j=2..4} size_j^theta_j energy_j^(1 - theta_j)); 0 when both vanish."""
    _check_thetas(thetas)
    quads = coeffs.collection if collection is None else tuple(collection)
    cert = _certificate(quads, certificate) if quads else {}
    lam = abs(lambda_from_coefficients(coeffs, quads))
    denom = size_j(coeffs, quads, 1, cert)
    for j, theta in zip((2, 3, 4), thetas):
        denom *= size_j(coeffs, quads, j, cert) ** theta * energy_j(coeffs, quads, j, "greedy", cert) ** (1 - theta)
    if denom == 0:
        return 0.0
    return lam / denom


def size_energy_inequality_check(collection, fs, shifts=(0, 0, 0), thetas=(1 / 3, 1 / 3, 1 / 3), p=2.0):
    _check_thetas(thetas)
    coeffs = CoefficientSequence.from_functions(tuple(collection), fs, shifts, p)
    return size_energy_ratio(coeffs, thetas)


# ---------------------------------------------------------------------------
# random instances


def random_rank10_collection(rng, size, case=1, beta=2.0, max_scale=11, positions=32):
    """``size`` quadtiles of one case, one per time interval, drawn from a generated pool.

    Keeping a single quadtile per time interval keeps the collection rank (1, 0).
    """
    seed = int(rng.integers(0, 2**31))
    pool = generate_case_collection(case, beta, scales=range(0, max_scale + 1), positions=positions, seed=seed)
    by_interval = {}
    for q in pool:
        by_interval.setdefault(q.I, []).append(q)
    choices = [group[int(rng.integers(len(group)))] for _, group in sorted(by_interval.items())]
    if size > len(choices):
        raise ValueError(f"pool has {len(choices)} time intervals, asked for {size}")
    picked = rng.choice(len(choices), size=size, replace=False)
    return [choices[k] for k in sorted(picked)]


def random_coefficients(rng, collection, spread=1.0):
    """Complex Gaussian coefficients scaled by |I_P|^{1/2} and a log-normal amplitude."""
    quads = tuple(collection)
    lengths = np.array([float(q.I.length) for q in quads])
    amp = np.exp(spread * rng.standard_normal((len(quads), 4)))
    z = rng.standard_normal((len(quads), 4)) + 1j * rng.standard_normal((len(quads), 4))
    return CoefficientSequence(quads, z * amp * np.sqrt(lengths)[:, None])
