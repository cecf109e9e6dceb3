"""Dyadic maximal operators on a fine grid, with weak-type and covering verification.

Functions live on cells [g h, (g+1) h) with h = 2^-J and integer cell index g.
Dyadic intervals are addressed as (level, k) and cover cells [k 2^level, (k+1) 2^level),
so level 0 is a single cell and level J + coarsest has length 2^coarsest.
Averages over intervals come from prefix sums, which are exact whenever the cell
values are dyadic rationals of modest size.

Superlevel-set measures are computed on the dyadic tree rather than on the grid:
{sup_{I ∋ x} a(I) > λ} is the disjoint union of the intervals I with
b(parent I) ≤ λ < b(I), where b is the running maximum of a along ancestors.
This counts sets that leave the grid domain (shifted intervals do) exactly.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .tilenorms import friends

MAX_J = 30


def bracket(n):
    """⟨n⟩ = 2 + |n|."""
    return 2 + abs(n)


@dataclass(frozen=True)
class DyadicGridFn:
    """Nonnegative cell averages on [start h, (start + N) h), h = 2^-J; zero outside."""

    J: int
    values: np.ndarray
    start: int = 0

    def __post_init__(self):
        if not (isinstance(self.J, (int, np.integer)) and 0 <= self.J <= MAX_J):
            raise ValueError(f"J must be an integer in [0, {MAX_J}], got {self.J}")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "J", int(self.J))
        object.__setattr__(self, "start", int(self.start))

    @property
    def h(self):
        return 2.0**-self.J

    @property
    def cells(self):
        return self.start + np.arange(self.values.size, dtype=np.int64)

    @property
    def domain(self):
        return self.start * self.h, (self.start + self.values.size) * self.h

    def edges(self):
        return (self.start + np.arange(self.values.size + 1)) * self.h

    def with_values(self, values):
        return DyadicGridFn(self.J, values, self.start)

    def pad(self, left=0, right=0):
        """Extend the domain by zero cells."""
        v = np.concatenate([np.zeros(left), self.values, np.zeros(right)])
        return DyadicGridFn(self.J, v, self.start - left)

    def refine(self, times=1):
        """The same function on a grid 2^times finer."""
        k = 2**times
        return DyadicGridFn(self.J + times, np.repeat(self.values, k), self.start * k)

    def integral(self):
        return float(self.values.sum()) * self.h

    def measure_where(self, mask):
        return float(np.count_nonzero(mask)) * self.h

    @classmethod
    def from_step_function(cls, step, J, lo, hi):
        """Cell averages of |step| over [lo, hi); lo and hi must sit on the 2^-J grid."""
        scale = 2**J
        a, b = lo * scale, hi * scale
        if a != int(a) or b != int(b) or b <= a:
            raise ValueError("domain endpoints must be distinct multiples of 2^-J")
        a, b = int(a), int(b)
        points = {float(lo), float(hi)}
        points.update(x for iv in step.intervals for x in iv if lo < x < hi)
        points.update(np.arange(a, b + 1) / scale)
        points = np.array(sorted(points))
        mids = 0.5 * (points[:-1] + points[1:])
        mass = np.abs(step(mids)) * np.diff(points)
        cell = np.floor(mids * scale).astype(np.int64) - a
        values = np.zeros(b - a)
        np.add.at(values, cell, mass)
        return cls(J, values * scale, a)

    @classmethod
    def indicator(cls, intervals, J, lo, hi):
        """1_E for E a finite union of intervals."""
        from .wavepacket import StepFunction

        return cls.from_step_function(StepFunction(tuple(intervals)), J, lo, hi)


def _levels(f, coarsest):
    top = f.J + (f.J if coarsest is None else int(coarsest))
    if top < 0:
        raise ValueError("coarsest scale is finer than the grid")
    return range(top + 1)


class _Sums:
    """Sums of cell values over arbitrary dyadic intervals (zero outside the domain)."""

    def __init__(self, f):
        self.f = f
        self.cum = np.concatenate([[0.0], np.cumsum(f.values)])
        self.lo = f.start
        self.hi = f.start + f.values.size

    def interval_sums(self, level, ks):
        # python ints: k << level overflows int64 at coarse levels with large shifts
        lo, hi, cum = self.lo, self.hi, self.cum
        a = [min(max(int(k) << level, lo), hi) - lo for k in ks]
        b = [min(max((int(k) + 1) << level, lo), hi) - lo for k in ks]
        return cum[b] - cum[a]

    def averages(self, level, ks):
        return self.interval_sums(level, ks) / 2.0**level


def _pointwise(f, n, coarsest, level_values):
    out = np.zeros(f.values.size)
    g = f.cells
    for level in _levels(f, coarsest):
        ks, inverse = np.unique(g >> level, return_inverse=True)
        out = np.maximum(out, level_values(level, ks, n)[inverse])
    return f.with_values(out)


def hl_max(f, coarsest=None):
    """Dyadic Hardy-Littlewood maximal function over lengths 2^-J .. 2^coarsest (default 2^J)."""
    sums = _Sums(f)
    return _pointwise(f, 0, coarsest, lambda level, ks, n: sums.averages(level, ks))


def sharp_shifted_max(f, n, coarsest=None):
    """sup over dyadic I ∋ x of |I|^-1 times the integral of f over I + n|I|."""
    sums = _Sums(f)
    return _pointwise(f, int(n), coarsest, lambda level, ks, n: sums.averages(level, ks + n))


def chi_power_primitive(u, power):
    """∫_0^u (1 + t^2)^(-power/2) dt for a positive integer power."""
    u = np.asarray(u, dtype=float)
    q = 1.0 + u * u
    # I_{m+2} = u / (m q^{m/2}) + (m - 1)/m I_m, starting from asinh (m = 1) or arctan (m = 2)
    m = 1 if power % 2 else 2
    acc = np.arcsinh(u) if m == 1 else np.arctan(u)
    while m < power:
        acc = u / (m * q ** (m / 2)) + (m - 1) / m * acc
        m += 2
    return acc


def chi_power_mass(power):
    """∫ (1 + u^2)^(-power/2) du over the line, for power ≥ 2."""
    if power < 2:
        raise ValueError("χ̃^power is integrable only for power ≥ 2")
    return math.sqrt(math.pi) * math.gamma((power - 1) / 2) / math.gamma(power / 2)


def _chi_weighted_averages(f, level, ks, n, power=1, chunk=1 << 22):
    # |I|^-1 ∫ v χ̃_{I^n}^power over one cell is v (P(u_b) - P(u_a)), u = (y - x_{I^n}) / |I|
    support = np.flatnonzero(f.values)
    if support.size == 0:
        return np.zeros(len(ks))
    v = f.values[support]
    left = (f.start + support).astype(float) / 2.0**level
    right = left + 2.0**-level
    centers = np.asarray(ks, dtype=float) + n + 0.5
    out = np.empty(len(ks))
    step = max(1, chunk // support.size)
    for s in range(0, len(ks), step):
        c = centers[s : s + step, None]
        out[s : s + step] = (chi_power_primitive(right - c, power) - chi_power_primitive(left - c, power)) @ v
    return out


def shifted_max(f, n, coarsest=None, power=1):
    """χ̃-weighted shifted maximal function: sup over dyadic I ∋ x of |I|^-1 ∫ f χ̃_{I + n|I|}^power.

    With power 1 the weight is not integrable, so the fine scales pick up a logarithm of
    the grid resolution; power ≥ 2 gives an operator bounded on L^∞.
    """
    if int(power) != power or power < 1:
        raise ValueError(f"power must be a positive integer, got {power}")
    return _pointwise(
        f, int(n), coarsest, lambda level, ks, n: _chi_weighted_averages(f, level, ks, n, int(power))
    )


# ---------------------------------------------------------------------------
# superlevel sets on the dyadic tree


@dataclass(frozen=True)
class _Profile:
    """Per tree node: level, index, its own average, and the running maximum above it."""

    level: np.ndarray
    index: np.ndarray
    own: np.ndarray
    above: np.ndarray
    h: float

    def lengths(self):
        return self.h * np.exp2(self.level)

    def measure(self, lam):
        hit = (self.above <= lam) & (lam < self.own)
        return float(self.lengths()[hit].sum())

    def maximal_intervals(self, lam):
        hit = (self.above <= lam) & (lam < self.own)
        return list(zip(self.level[hit].tolist(), self.index[hit].tolist()))


def _profile(f, n, coarsest=None):
    """Nodes I whose shifted interval I + n|I| meets the domain, closed under parents."""
    sums = _Sums(f)
    levels = list(_levels(f, coarsest))
    lo, hi = f.start, f.start + f.values.size - 1
    per_level = []
    carried = set()
    for level in levels:
        own = set(range((lo >> level) - n, (hi >> level) - n + 1))
        ks = sorted(own | carried)
        carried = {k >> 1 for k in ks}
        per_level.append(ks)
    rows = []
    above = {}
    for level in reversed(levels):
        ks = per_level[level]
        avg = sums.averages(level, [k + n for k in ks])
        new_above = {}
        for k, a in zip(ks, avg):
            b_parent = above.get(k >> 1, 0.0)
            rows.append((level, k, max(a, b_parent), b_parent))
            new_above[k] = max(a, b_parent)
        above = new_above
    level, index, own, par = (np.array(c) for c in zip(*rows))
    # a node contributes only when it raises the running maximum
    keep = own > par
    return _Profile(level[keep], index[keep], own[keep], par[keep], f.h)


def superlevel_measure(f, lam, n=0, coarsest=None):
    """|{x: M̃^n f(x) > λ}| exactly, including the part outside the grid domain (n = 0 gives M)."""
    return _profile(f, int(n), coarsest).measure(lam)


def default_lambdas(f, count=32):
    top = float(f.values.max())
    if top <= 0:
        raise ValueError("f is identically zero")
    return top * np.exp2(-np.linspace(0.25, 12.0, count))


@dataclass
class WeakTypeReport:
    n: int
    lambdas: np.ndarray
    measure_sharp: np.ndarray
    measure_hl: np.ndarray

    @property
    def ratios(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.measure_hl > 0, self.measure_sharp / self.measure_hl, np.nan)

    @property
    def max_ratio(self):
        return float(np.nanmax(self.ratios))

    @property
    def normalized(self):
        """max ratio / log2⟨n⟩."""
        return self.max_ratio / math.log2(bracket(self.n))

    def rows(self):
        for lam, s, m, r in zip(self.lambdas, self.measure_sharp, self.measure_hl, self.ratios):
            yield self.n, float(lam), float(s), float(m), float(r)

    def write_csv(self, stream, header=True):
        writer = csv.writer(stream, lineterminator="\n")
        if header:
            writer.writerow(["n", "lambda", "measure_sharp", "measure_hl", "ratio"])
        for row in self.rows():
            writer.writerow([row[0]] + [repr(x) for x in row[1:]])


def weak_type_test(f, n, lambdas=None, coarsest=None):
    """|{M̃^n f > λ}| / |{M f > λ}| over a λ grid."""
    n = int(n)
    lambdas = default_lambdas(f) if lambdas is None else np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise ValueError("lambda must be positive")
    sharp, plain = _profile(f, n, coarsest), _profile(f, 0, coarsest)
    ms = np.array([sharp.measure(lam) for lam in lambdas])
    mh = np.array([plain.measure(lam) for lam in lambdas])
    if not np.any(mh > 0):
        raise ValueError("every superlevel set of M f is empty on this lambda grid")
    return WeakTypeReport(n, lambdas, ms, mh)


@dataclass
class WeakTypeSweep:
    reports: list

    def fitted_constant(self):
        """Smallest C with max ratio ≤ C log2⟨n⟩ over the sweep."""
        return max(r.normalized for r in self.reports)

    def per_n(self):
        out = {}
        for r in self.reports:
            out[r.n] = max(out.get(r.n, 0.0), r.normalized)
        return dict(sorted(out.items()))

    def growth_slope(self):
        """Least-squares slope of log(max ratio) against log(log2⟨n⟩); 1 is the predicted rate."""
        ns = [n for n in self.per_n() if n != 0]
        x = np.log([math.log2(bracket(n)) for n in ns])
        y = np.log([self.per_n()[n] * math.log2(bracket(n)) for n in ns])
        return float(np.polyfit(x, y, 1)[0])

    def write_csv(self, stream):
        for k, r in enumerate(self.reports):
            r.write_csv(stream, header=k == 0)


def weak_type_sweep(functions, ns=tuple(2**k for k in range(11)), lambdas=None, coarsest=None):
    return WeakTypeSweep([weak_type_test(f, n, lambdas, coarsest) for f in functions for n in ns])


# ---------------------------------------------------------------------------
# the covering claim


@dataclass
class CoveringResult:
    holds: bool
    selected: list
    max_friend_count: int
    uncovered: list

    def __bool__(self):
        return self.holds


def friend_offsets(n):
    """Index offsets (same level) of the intervals receiving n-shifted subintervals."""
    fr = friends(abs(n))
    return sorted(-m for m in fr) if n >= 0 else sorted(fr)


def covering_check(f, n, lam, coarsest=None, details=False):
    """Check {M̃^n f > λ} ⊆ union of the friend intervals of the maximal intervals of {M f > λ}.

    Every maximal interval of the sharp superlevel set must sit inside one friend interval;
    this is checked exactly on the dyadic tree.
    """
    n = int(n)
    selected = _profile(f, 0, coarsest).maximal_intervals(lam)
    offsets = friend_offsets(n)
    cover = {(level, k + d) for level, k in selected for d in offsets}
    top = max(_levels(f, coarsest))
    uncovered = []
    for level, k in _profile(f, n, coarsest).maximal_intervals(lam):
        if not any((up, k >> (up - level)) in cover for up in range(level, top + 1)):
            uncovered.append((level, k))
    result = CoveringResult(not uncovered, selected, len(offsets), uncovered)
    return result if details else result.holds


# ---------------------------------------------------------------------------
# comparison of M^n with a weighted sum of sharp operators


def shift_weight(m):
    """sup of χ̃_{I^n} over I^{n+m}."""
    return 1.0 if m == 0 else 1.0 / math.sqrt(1.0 + (abs(m) - 0.5) ** 2)


def series_majorant(f, n, truncation=64, coarsest=None):
    """Σ_{|m| ≤ T} w_m M̃^{n+m} f and the bound w_{T+1} ∫f / h on the dropped terms.

    Since χ̃_{I^n} ≤ w_m on I^{n+m}, M^n f ≤ majorant + tail pointwise.
    """
    total = np.zeros(f.values.size)
    for m in range(-truncation, truncation + 1):
        total += shift_weight(m) * sharp_shifted_max(f, n + m, coarsest).values
    tail = shift_weight(truncation + 1) * f.integral() / f.h
    return f.with_values(total), tail


# ---------------------------------------------------------------------------
# random instances


def random_step_function(rng, J=10, pieces=8, max_value=16, cells=None):
    """Integer-valued step function on [0, 1) with breakpoints on the 2^-J grid."""
    size = 2**J if cells is None else cells
    cuts = np.sort(rng.choice(np.arange(1, size), size=pieces - 1, replace=False))
    heights = rng.integers(0, max_value + 1, size=pieces)
    if not heights.any():
        heights[rng.integers(pieces)] = max_value
    values = np.repeat(heights, np.diff(np.concatenate([[0], cuts, [size]])))
    return DyadicGridFn(J, values.astype(float))
