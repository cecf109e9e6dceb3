"""Restricted-weak-type pipeline for the discrete model form.

Given sets E_1, E_2, E_3 and E_4 with |E_4| = 1, the exceptional set is

    Ω = ∪_j {x : M^{n_j}(1_{E_j} / |E_j|)(x) > C log2⟨n_j⟩},

computed on a dyadic grid with the χ̃-weighted shifted maximal function. The model
form Λ_P(f_1, f_2, f_3, 1_{E_4 \\ Ω}) is then split by the distance of each time
interval to Ω^c and compared with Π log2⟨n_j⟩^4 Π |E_j|^{γ_j}.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .maximal import DyadicGridFn, bracket, chi_power_mass, shifted_max
from .tilenorms import CoefficientSequence, random_rank10_collection
from .wavepacket import StepFunction

log = logging.getLogger(__name__)

DEFAULT_C = 8.0
# power of χ̃ in the maximal function defining Ω; power 1 is not integrable, and the
# weight is divided by its total mass so that M^n f ≤ sup f
OMEGA_CHI_POWER = 2
MAX_ESCALATIONS = 12


# ---------------------------------------------------------------------------
# sets on the grid


@dataclass(frozen=True)
class GridSet:
    """A union of cells [g 2^-J, (g+1) 2^-J) for the cells g = start + i with mask[i] set."""

    J: int
    start: int
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @property
    def h(self):
        return 2.0**-self.J

    @property
    def measure(self):
        return float(np.count_nonzero(self.mask)) * self.h

    def cell_runs(self):
        """Maximal runs of set cells as half-open (first, last + 1) cell indices."""
        m = np.concatenate([[False], self.mask, [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(m))
        return [(self.start + a, self.start + b) for a, b in zip(edges[::2], edges[1::2])]

    def intervals(self):
        return [(a * self.h, b * self.h) for a, b in self.cell_runs()]

    def subtract_from(self, intervals):
        """intervals minus this set, as a sorted list of intervals."""
        out = []
        runs = self.intervals()
        for a, b in sorted(intervals):
            pieces = [(a, b)]
            for lo, hi in runs:
                nxt = []
                for x, y in pieces:
                    if hi <= x or lo >= y:
                        nxt.append((x, y))
                        continue
                    if x < lo:
                        nxt.append((x, lo))
                    if hi < y:
                        nxt.append((hi, y))
                pieces = nxt
            out.extend(pieces)
        return out

    def distance_to_complement(self, a, b):
        """dist([a, b), Ω^c) in cells for integer cell bounds; cells off the grid are in Ω^c."""
        lo, hi = a - self.start, b - self.start
        n = self.mask.size
        if lo < 0 or hi > n or not self.mask[lo:hi].all():
            return 0
        left = np.flatnonzero(~self.mask[:lo])
        right = np.flatnonzero(~self.mask[hi:])
        d_left = lo - (left[-1] + 1) if left.size else lo
        d_right = right[0] if right.size else n - hi
        return int(min(d_left, d_right))


def union_measure(intervals):
    total, reach = 0.0, -math.inf
    for a, b in sorted(intervals):
        if b > reach:
            total += b - max(a, reach)
            reach = b
    return total


def random_union(rng, measure, J=10, max_intervals=16, lo=0, hi=1):
    """A union of at most ``max_intervals`` grid intervals inside [lo, hi) with exactly this measure
    (rounded to whole cells)."""
    scale = 2**J
    first, total = int(round(lo * scale)), int(round((hi - lo) * scale))
    cells = int(round(measure * scale))
    if not 1 <= cells <= total:
        raise ValueError(f"measure {measure} does not fit in [{lo}, {hi}) at J = {J}")
    k = int(rng.integers(1, min(max_intervals, cells) + 1))
    k = min(k, total - cells + 1)
    lengths = np.diff(np.concatenate([[0], np.sort(rng.choice(np.arange(1, cells), k - 1, replace=False)), [cells]]))
    free = total - cells
    gaps = rng.multinomial(free, np.full(k + 1, 1 / (k + 1)))
    # interior gaps must be positive so the runs stay separate
    gaps[1:k] += 1
    gaps[0] -= k - 1
    while gaps[0] < 0:
        j = int(np.argmax(gaps[1:k])) + 1
        take = min(gaps[j] - 1, -gaps[0])
        gaps[j] -= take
        gaps[0] += take
    out, pos = [], first + gaps[0]
    for length, gap in zip(lengths, gaps[1:]):
        out.append((pos / scale, (pos + length) / scale))
        pos += length + gap
    return out


def concentrated_set(rng, measure, J=10, lo=0, hi=1):
    """A single grid interval of the given measure at a random position."""
    scale = 2**J
    cells = int(round(measure * scale))
    total = int(round((hi - lo) * scale))
    if not 1 <= cells <= total:
        raise ValueError(f"measure {measure} does not fit in [{lo}, {hi}) at J = {J}")
    a = int(round(lo * scale)) + int(rng.integers(0, total - cells + 1))
    return [(a / scale, (a + cells) / scale)]


# ---------------------------------------------------------------------------
# the exceptional set


@dataclass
class ExceptionalSet:
    omega: GridSet
    C: float
    escalations: int
    parts: list  # per j: measure of {M^{n_j} f_j > C log2⟨n_j⟩}
    shifts: tuple

    @property
    def measure(self):
        return self.omega.measure

    def weak_constants(self):
        """A_j = C |Ω_j|, so that |Ω| ≤ Σ_j A_j / C."""
        return [self.C * m for m in self.parts]

    def to_dict(self):
        return {
            "C": self.C,
            "escalations": self.escalations,
            "measure": self.measure,
            "parts": list(self.parts),
            "shifts": list(self.shifts),
            "intervals": [list(iv) for iv in self.omega.intervals()],
        }


def _padding(n, threshold):
    # M^n f(x) > t with ||f||_1 = 1 and a weight ≤ 1 forces |I| < 1/t and dist(x_{I^n}, supp f) < 1/t,
    # so x lies within (|n| + 3/2)/t of the support on the side the shift points to
    reach = (abs(n) + 1.5) / threshold
    return (reach, 1.5 / threshold) if n >= 0 else (1.5 / threshold, reach)


def build_exceptional_set(E, shifts, C=DEFAULT_C, J=10, target=0.5, escalate=True, power=OMEGA_CHI_POWER):
    """Ω for E = (E_1, E_2, E_3), each a list of intervals; C doubles until |Ω| < target."""
    if len(E) != 3 or len(shifts) != 3:
        raise ValueError("need three sets and three shifts")
    measures = [union_measure(e) for e in E]
    if min(measures) <= 0:
        raise ValueError("every E_j must have positive measure")
    scale = 2**J
    escalations = 0
    while True:
        thresholds = [C * math.log2(bracket(n)) for n in shifts]
        lo = min(min(a for a, _ in e) - _padding(n, t)[0] for e, n, t in zip(E, shifts, thresholds))
        hi = max(max(b for _, b in e) + _padding(n, t)[1] for e, n, t in zip(E, shifts, thresholds))
        first, last = math.floor(lo * scale) - 1, math.ceil(hi * scale) + 1
        mask = np.zeros(last - first, dtype=bool)
        parts = []
        for e, m, n, t in zip(E, measures, shifts, thresholds):
            f = DyadicGridFn.from_step_function(StepFunction(tuple(e)), J, first / scale, last / scale)
            f = f.with_values(f.values / m)
            # |I| ≥ 1/t cannot exceed the threshold, so lengths up to 1 cover every case that matters
            coarsest = max(0, math.ceil(-math.log2(t)) + 1)
            hit = shifted_max(f, n, coarsest=coarsest, power=power).values > t * chi_power_mass(power)
            parts.append(float(np.count_nonzero(hit)) / scale)
            mask |= hit
        omega = GridSet(J, first, mask)
        if omega.measure < target or not escalate or escalations >= MAX_ESCALATIONS:
            if omega.measure >= target:
                log.warning("|Omega| = %.4g still >= %.4g at C = %g", omega.measure, target, C)
            return ExceptionalSet(omega, C, escalations, parts, tuple(shifts))
        log.info("|Omega| = %.4g >= %.4g at C = %g; doubling C", omega.measure, target, C)
        C *= 2
        escalations += 1


# ---------------------------------------------------------------------------
# the distance partition


def distance_class(quad, omega):
    """0 when dist(I, Ω^c) < |I|; otherwise the least d ≥ 1 with dist ≤ 2^d |I|."""
    a, b = (x * 2**omega.J for x in quad.I.bounds)
    if a.denominator != 1 or b.denominator != 1:
        raise ValueError("time interval is finer than the grid of Omega")
    a, b = int(a), int(b)
    dist, length = omega.distance_to_complement(a, b), b - a
    if dist < length:
        return 0
    d = 1
    while dist > length << d:
        d += 1
    return d


def partition_by_distance(collection, omega):
    """{d: quadtiles with distance class d}; every quadtile lands in exactly one class."""
    out = {}
    for q in collection:
        out.setdefault(distance_class(q, omega), []).append(q)
    return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment_id: str = "rwt"
    seed: int = 0
    beta: float = 2.0
    gammas: tuple = (0.95, 0.45, 0.95)
    case: int = 1
    max_scale: int = 8
    collection_size: int = 120
    positions: int = 32
    measures: tuple = (0.25, 0.25, 0.25)
    set_family: str = "random"  # or "concentrated"
    shifts: tuple = (0, 0, 0)
    C: float = DEFAULT_C
    grid_J: int = 10
    random_phases: bool = False
    p: float = 2.0
    output: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gammas = tuple(float(g) for g in self.gammas)
        self.measures = tuple(float(m) for m in self.measures)
        self.shifts = tuple(int(n) for n in self.shifts)
        self.validate()

    def validate(self):
        g1, g2, g3 = self.gammas
        if not (0 < g1 < 1 and 0 < g3 < 1 and 0 < g2 < 0.5):
            raise ValueError(f"need gamma_1, gamma_3 in (0, 1) and gamma_2 in (0, 1/2), got {self.gammas}")
        if len(self.measures) != 3 or not all(0 < m <= 1 for m in self.measures):
            raise ValueError("set measures must be three numbers in (0, 1]")
        if len(self.shifts) != 3:
            raise ValueError("need three shifts")
        if self.case not in (1, 2, 3):
            raise ValueError("case must be 1, 2 or 3")
        if self.set_family not in ("random", "concentrated"):
            raise ValueError("set_family must be 'random' or 'concentrated'")
        if self.grid_J < self.max_scale:
            raise ValueError("the grid must resolve the finest time interval")
        if self.C <= 0 or self.collection_size < 1:
            raise ValueError("C and collection_size must be positive")

    def to_dict(self):
        d = asdict(self)
        for k in ("gammas", "measures", "shifts"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data):
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# the pipeline


@dataclass
class RWTReport:
    config: dict
    exceptional: dict
    e4_measure: float
    e4_prime_measure: float
    total: complex
    strata: list  # rows (d, count, contribution)
    decay_slope: float
    bound: float
    ratio: float

    @property
    def stratum_sum_error(self):
        s = sum(complex(re, im) for _, _, (re, im) in self.strata)
        return abs(s - self.total)

    def to_dict(self):
        d = asdict(self)
        d["total"] = [self.total.real, self.total.imag]
        d["stratum_sum_error"] = self.stratum_sum_error
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _sets(rng, config):
    make = random_union if config.set_family == "random" else concentrated_set
    return [make(rng, m, config.grid_J) for m in config.measures]


def _function(rng, intervals, random_phases):
    if not random_phases:
        return StepFunction(tuple(intervals))
    phases = np.exp(2j * np.pi * rng.random(len(intervals)))
    return StepFunction(tuple(intervals), tuple(phases))


def geometric_slope(contributions):
    """Least-squares slope of log2 |c_d| over the d ≥ 1 strata with c_d ≠ 0 (nan if fewer than two)."""
    pts = [(d, math.log2(abs(c))) for d, c in contributions if d >= 1 and abs(c) > 0]
    if len(pts) < 2:
        return float("nan")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def rwt_experiment(config, E=None, collection=None):
    """One run: Ω, E_4' = [0, 1) \\ Ω, the stratified form and the bound ratio."""
    rng = np.random.default_rng([config.seed, 0x5257])
    E = _sets(rng, config) if E is None else [list(e) for e in E]
    measures = [union_measure(e) for e in E]
    if min(measures) <= 0:
        raise ValueError("degenerate set E_j")
    if collection is None:
        collection = random_rank10_collection(
            rng, config.collection_size, config.case, config.beta, config.max_scale, config.positions
        )
    collection = tuple(collection)
    if not collection:
        raise ValueError("empty collection")

    exc = build_exceptional_set(E, config.shifts, config.C, config.grid_J)
    e4 = [(0.0, 1.0)]
    e4_prime = exc.omega.subtract_from(e4)
    fs = [_function(rng, e, config.random_phases) for e in E]
    fs.append(StepFunction(tuple(e4_prime)) if e4_prime else StepFunction(((0.0, 0.0),)))

    coeffs = CoefficientSequence.from_functions(collection, fs, config.shifts, config.p)
    lengths = np.array([float(q.I.length) for q in collection])
    terms = np.prod(coeffs.values, axis=1) / lengths
    index = {q: k for k, q in enumerate(collection)}
    strata = []
    for d, quads in partition_by_distance(collection, exc.omega).items():
        c = complex(np.sum(terms[[index[q] for q in quads]]))
        strata.append((d, len(quads), (c.real, c.imag)))
    total = complex(np.sum(terms))

    g1, g2, g3 = config.gammas
    logs = math.prod(math.log2(bracket(n)) ** 4 for n in config.shifts)
    # |E_4| = 1, so the gamma_4 factor is 1
    bound = logs * measures[0] ** g1 * measures[1] ** g2 * measures[2] ** g3
    slope = geometric_slope([(d, complex(*c)) for d, _, c in strata])
    return RWTReport(
        config=config.to_dict(),
        exceptional=exc.to_dict(),
        e4_measure=1.0,
        e4_prime_measure=union_measure(e4_prime),
        total=total,
        strata=strata,
        decay_slope=slope,
        bound=bound,
        ratio=abs(total) / bound,
    )


@dataclass
class SweepRow:
    label: str
    measures: tuple
    shifts: tuple
    ratio: float
    omega: float
    e4_prime: float
    stratum_sum_error: float
    decay_slope: float


def rwt_sweep(base, measure_grid=None, shift_grid=None):
    """Runs over E_1 sizes (others fixed) and over n_3 (others zero), sharing one collection."""
    rng = np.random.default_rng([base.seed, 0x5357])
    collection = random_rank10_collection(
        rng, base.collection_size, base.case, base.beta, base.max_scale, base.positions
    )
    measure_grid = tuple(4.0**-k for k in range(6)) if measure_grid is None else measure_grid
    shift_grid = (0, 4, 16) if shift_grid is None else shift_grid
    rows = []
    make = random_union if base.set_family == "random" else concentrated_set
    others = [make(rng, m, base.grid_J) for m in base.measures[1:]]
    # nested E_1 so that shrinking the set is the only change
    outer = make(rng, max(measure_grid), base.grid_J)
    for m in measure_grid:
        e1 = _truncate(outer, m)
        cfg = ExperimentConfig.from_dict({**base.to_dict(), "measures": (m,) + tuple(base.measures[1:])})
        rep = rwt_experiment(cfg, [e1] + others, collection)
        rows.append(_row("size", cfg, rep))
    for n3 in shift_grid:
        cfg = ExperimentConfig.from_dict({**base.to_dict(), "shifts": (0, 0, n3)})
        sets = [_truncate(outer, base.measures[0])] + others
        rep = rwt_experiment(cfg, sets, collection)
        rows.append(_row("shift", cfg, rep))
    return rows


def _truncate(intervals, measure):
    """The leftmost part of a union of intervals with the given measure."""
    out, left = [], measure
    for a, b in sorted(intervals):
        if left <= 0:
            break
        take = min(b - a, left)
        out.append((a, a + take))
        left -= take
    if left > 1e-12:
        raise ValueError("the union is smaller than the requested measure")
    return out


def _row(label, cfg, rep):
    return SweepRow(
        label,
        cfg.measures,
        cfg.shifts,
        rep.ratio,
        rep.exceptional["measure"],
        rep.e4_prime_measure,
        rep.stratum_sum_error,
        rep.decay_slope,
    )


def log4_trend(rows):
    """Slope of log(ratio · Π log2⟨n⟩^4) against log(log2⟨n_3⟩^4) over the shift rows.

    A slope at most 1 means the form grows no faster than the log^4 envelope.
    """
    pts = [(r.shifts[2], r.ratio) for r in rows if r.label == "shift" and r.ratio > 0]
    if len(pts) < 2:
        return float("nan")
    x = np.log([math.log2(bracket(n)) ** 4 for n, _ in pts])
    y = np.log([ratio * math.log2(bracket(n)) ** 4 for n, ratio in pts])
    return float(np.polyfit(x, y, 1)[0])
