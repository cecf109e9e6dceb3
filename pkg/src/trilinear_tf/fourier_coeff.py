"""Fourier coefficients of the localized symbol and their decay envelope.

Everything is computed in the rescaled frame where the frequency cube has unit
side, so the expansion frequencies are the integers.  Each coordinate carries
a bump psi(t) = b(t) / A(t), where b is a standard bump of radius RHO < 1/2
(supported inside 0.9 of the cube) and A(t) = sum_m b(t - m/3) sums the bumps
of the three shifted grids, so the psi's form a partition of unity and the
divisor a = A1*A2*A3 is bounded between fixed constants.  The coefficient is

    C(n) = int m_plus(xi) * prod_i b(xi_i - c_i) / a(xi) * exp(-2 pi i n.xi) dxi

with m_plus the averaged half-plane symbol.  The symbol has kinks on the
planes beta*xi2 + xi3 = 0 and xi1 + beta*xi2 + xi3 = 0; the innermost xi3
integral is split at both for every (xi1, xi2) node pair, so the tensor
Gauss-Legendre rule only ever sees smooth pieces.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .dyadic import ShiftedDyadicCube, ShiftedDyadicInterval
from .symbol import _gl, _beta, primitive_G, unit_bump

log = logging.getLogger(__name__)

RHO = 0.45  # bump radius in units of the cube side
LATTICE = 1.0 / 3.0  # centres of the three shifted grids interleave at this spacing
DIVISOR_RANGE = (0.1, 10.0)
NODES_PER_OSCILLATION = 8
BASE_NODES = 24  # per piece


def lattice_bump(t):
    """Standard bump of radius RHO, normalised to peak 1."""
    return math.e * unit_bump(np.asarray(t, dtype=float) / RHO)


_NEIGHBOURS = range(-2, 3)


def lattice_sum(t):
    """A(t) = sum over integers m of lattice_bump(t - m/3); 1/3-periodic."""
    t = np.asarray(t, dtype=float)
    frac = t - LATTICE * np.round(t / LATTICE)
    return sum(lattice_bump(frac - m * LATTICE) for m in _NEIGHBOURS)


@dataclass(frozen=True)
class RescaledCube:
    """A frequency cube of side 2^scale, stored through its rescaled centres."""

    case: int
    scale: int
    centers: tuple
    cube: ShiftedDyadicCube = field(default=None, compare=False, repr=False)

    @classmethod
    def from_dyadic(cls, case, cube):
        side = Fraction(2) ** cube.j
        centers = tuple(float(s.center / side) for s in cube.sides)
        return cls(case, cube.j, centers, cube)


# Relative points where the bump or a neighbour's bump switches on; the
# integrand is smooth but not analytic there, so quadrature pieces end there.
_SEAMS = tuple(sorted(
    {-RHO, RHO}
    | {m * LATTICE + e for m in _NEIGHBOURS for e in (-RHO, RHO) if m and abs(m * LATTICE + e) < RHO}
))


def _pieces_rule(breaks, count):
    """Gauss-Legendre with ``count`` nodes on each consecutive piece of breaks (last axis)."""
    g, gw = _gl(count)
    a, b = breaks[..., :-1, None], breaks[..., 1:, None]
    half = 0.5 * (b - a)
    x = (0.5 * (a + b) + half * g).reshape(breaks.shape[:-1] + (-1,))
    w = np.broadcast_to(half * gw, half.shape[:-1] + (count,)).reshape(x.shape)
    return x, w


def _axis_rule(center, count):
    return _pieces_rule(center + np.array(_SEAMS), count)


def _node_count(length, n_max):
    """Nodes per piece: at least 8 per oscillation of exp(-2 pi i n t) over a piece."""
    return max(BASE_NODES, math.ceil(NODES_PER_OSCILLATION * length * float(n_max)) + 8)


def _symbol_factor(xi1, c):
    """m_plus written through the primitive: G(xi1, c) / xi1, or 1{c > 0} on xi1 = 0."""
    safe = np.where(xi1 == 0, 1.0, xi1)
    return np.where(xi1 == 0, (c > 0).astype(float), primitive_G(xi1, c) / safe)


def check_divisor_range(lo, hi):
    if not (DIVISOR_RANGE[0] < lo and hi < DIVISOR_RANGE[1]):
        raise ValueError(
            f"divisor range [{lo:.3g}, {hi:.3g}] leaves {DIVISOR_RANGE}; "
            "the partition of unity is malformed"
        )


def compute_C_grid(cube, n1s, n2s, n3s, beta, use_divisor=True, refine=1, scale=1.0,
                   chunk_size=2_000_000):
    """C(n1, n2, n3) for every combination of the given integer lists.

    The xi3 integral is done first for every n3 and every (xi1, xi2) node;
    the xi1 and xi2 sums are then matrix products.  ``refine`` multiplies every
    node count (used by refinement oracles).  ``scale`` evaluates the
    unrescaled integral over the cube dilated by ``scale``, with the 1/scale^3
    normalisation that makes it scale free.
    """
    beta = _beta(beta)
    n1s, n2s, n3s = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (n1s, n2s, n3s))
    c1, c2, c3 = cube.centers
    s = float(scale)
    x1, w1 = _axis_rule(c1, refine * _node_count(RHO, np.max(np.abs(n1s))))
    x2, w2 = _axis_rule(c2, refine * _node_count(RHO, np.max(np.abs(n2s))))
    q3 = refine * _node_count(RHO, np.max(np.abs(n3s)))
    f1, f2 = lattice_bump(x1 - c1), lattice_bump(x2 - c2)
    a_lo = a_hi = 1.0
    if use_divisor:
        a1, a2 = lattice_sum(x1 - c1), lattice_sum(x2 - c2)
        f1, f2 = f1 / a1, f2 / a2
        a_lo, a_hi = a1.min() * a2.min(), a1.max() * a2.max()
        a3_lo, a3_hi = np.inf, -np.inf

    G = np.empty((x1.size, x2.size, n3s.size), dtype=complex)
    lo, hi = c3 - RHO, c3 + RHO
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    kinks = np.stack([-beta * X2, -X1 - beta * X2], axis=-1)
    if not np.any((kinks > lo) & (kinks < hi)):
        # no kink inside the support: every (xi1, xi2) shares the xi3 nodes
        x3, w3 = _axis_rule(c3, q3)
        f3 = w3 * lattice_bump(x3 - c3)
        if use_divisor:
            a3 = lattice_sum(x3 - c3)
            f3 = f3 / a3
            a3_lo, a3_hi = a3.min(), a3.max()
        phase = f3[:, None] * np.exp(-2j * np.pi * np.outer(x3, n3s))
        rows = max(1, int(chunk_size // (x2.size * x3.size)))
        for start in range(0, x1.size, rows):
            sl = slice(start, start + rows)
            sym = _symbol_factor(s * X1[sl, :, None], s * (beta * X2[sl, :, None] + x3))
            G[sl] = (sym.reshape(-1, x3.size) @ phase).reshape(sym.shape[:2] + (-1,))
    else:
        rows = max(1, int(chunk_size // (x2.size * (len(_SEAMS) + 2) * q3)))
        for start in range(0, x1.size, rows):
            sl = slice(start, start + rows)
            # pieces of the xi3 support cut at the seams and at the two kink planes
            seams = np.broadcast_to(c3 + np.array(_SEAMS), X1[sl].shape + (len(_SEAMS),))
            breaks = np.concatenate([seams, np.clip(kinks[sl], lo, hi)], axis=-1)
            x3, w3 = _pieces_rule(np.sort(breaks, axis=-1), q3)
            f3 = lattice_bump(x3 - c3)
            if use_divisor:
                a3 = lattice_sum(x3 - c3)
                f3 = f3 / a3
                a3_lo, a3_hi = min(a3_lo, a3.min()), max(a3_hi, a3.max())
            sym = _symbol_factor(s * X1[sl, :, None], s * (beta * X2[sl, :, None] + x3))
            inner = w3 * f3 * sym
            for k, n3 in enumerate(n3s):
                G[sl, :, k] = np.einsum("ijq,ijq->ij", inner, np.exp(-2j * np.pi * n3 * x3))
    if use_divisor:
        # a is a product of one-dimensional factors, so its range is the product of ranges
        check_divisor_range(float(a_lo * a3_lo), float(a_hi * a3_hi))

    e1 = np.exp(-2j * np.pi * np.outer(n1s, x1)) * (w1 * f1)
    e2 = np.exp(-2j * np.pi * np.outer(n2s, x2)) * (w2 * f2)
    out = np.empty((n1s.size, n2s.size, n3s.size), dtype=complex)
    for k in range(n3s.size):
        out[:, :, k] = e1 @ G[:, :, k] @ e2.T
    return out


def compute_C(cube, n1, n2, n3, beta, use_divisor=True, refine=1, scale=1.0):
    return complex(compute_C_grid(cube, [n1], [n2], [n3], beta, use_divisor, refine, scale)[0, 0, 0])


def profile_transform(center, n, use_divisor=True, nodes=None):
    """One-dimensional int psi(t - center) exp(-2 pi i n t) dt."""
    count = nodes or _node_count(RHO, abs(n))
    x, w = _axis_rule(center, count)
    f = lattice_bump(x - center)
    if use_divisor:
        f = f / lattice_sum(x - center)
    return complex(np.sum(w * f * np.exp(-2j * np.pi * n * x)))


@dataclass(frozen=True)
class CoeffEnvelopeParams:
    M: tuple = (8, 8, 8, 8)
    c: tuple = (1.0,) * 6

    def __post_init__(self):
        if len(self.M) != 4 or any(int(m) != m or m < 2 for m in self.M):
            raise ValueError("need four integer exponents, each at least 2")
        if len(self.c) != 6 or any(not v > 0 for v in self.c):
            raise ValueError("need six positive constants")


def bracket(n):
    return 2.0 + np.abs(n)


def envelope_terms(n1, n2, n3, beta, params=CoeffEnvelopeParams()):
    """The six terms of the decay bound, stacked on a leading axis."""
    beta = _beta(beta)
    n1, n2, n3 = (np.asarray(v, dtype=float) for v in (n1, n2, n3))
    M1, M2, M3, M4 = params.M
    c1, c2, c3, c4, c5, c6 = params.c
    b = bracket
    return np.stack(np.broadcast_arrays(
        c1 / (b(n3) ** 2 * b(n1 - n3) ** M2 * b(n2 - beta * n3) ** M3),
        c2 / (b(n3) ** 2 * b(n1) ** M2 * b(n2 - beta * n3) ** M3),
        c3 / (b(n3) ** M1 * b(n1 - n2 / beta) ** M2 * b(n3 - n2 / beta) ** M3),
        c4 / (b(n3) ** M1 * b(n1) ** M2 * b(n3 - n2 / beta) ** M3),
        c5 / (b(n3) ** M1 * b(n2) ** M2 * b(n3 - n1) ** M3 * b(n2 - beta * n1) ** M4),
        c6 / (b(n3) ** M1 * b(n2) ** M2 * b(n1) ** M3),
    ))


def decay_envelope(n1, n2, n3, beta, params=CoeffEnvelopeParams()):
    out = envelope_terms(n1, n2, n3, beta, params).sum(axis=0)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# cube samples

def _mesh_center_near(target, j, rng):
    """A shifted mesh interval at scale j whose rescaled centre is near target."""
    sigma = Fraction(int(rng.integers(0, 3)), 3)
    iv = ShiftedDyadicInterval.containing(Fraction(target).limit_denominator(10**6) * Fraction(2) ** j, j, sigma)
    return iv


def sample_cubes(case, beta, scales=range(-3, 4), per_scale=2, seed=0):
    """Random rescaled cubes following the frequency geometry of one case.

    Centres are in units of the cube side.  Case 1: |xi1| in 4..8 and the
    plane beta*xi2 + xi3 = 0 crossing the support.  Case 2: xi1 at the origin
    and beta*xi2 + xi3 far enough out that no plane alpha*xi1 + beta*xi2 + xi3
    = 0 meets the support, on the side where the symbol is 1 (on the other
    side C vanishes).  Case 3: |xi1| and |beta*xi2 + xi3| both in 4..8 with
    the plane xi1 + beta*xi2 + xi3 = 0 crossing the support; with equal signs
    the symbol would be constant there and the cube would repeat case 2.
    """
    beta = _beta(beta)
    if case not in (1, 2, 3):
        raise ValueError(f"case must be 1, 2 or 3, got {case}")
    clear = (abs(beta) + 2) * RHO + 1.5
    out = []
    for j in scales:
        rng = np.random.default_rng([seed, case, j + 1000])
        for i in range(per_scale):
            # alternate the sign of xi1 so every scale sees both orientations
            if case == 2:
                t1 = 0.0
            else:
                t1 = (-1) ** i * rng.uniform(4, 8)
            t2 = rng.uniform(-4, 4)
            s1 = _mesh_center_near(t1, j, rng)
            s2 = _mesh_center_near(t2, j, rng)
            side = Fraction(2) ** j
            c1, c2 = float(s1.center / side), float(s2.center / side)
            if case == 1:
                offset = 0.0
            elif case == 2:
                # on the negative side the symbol vanishes and so does C
                offset = clear + abs(c1) + rng.uniform(0, 3)
            else:
                offset = -c1 + rng.uniform(-0.5, 0.5)
            s3 = _mesh_center_near(-beta * c2 + offset, j, rng)
            cube = ShiftedDyadicCube(j, (s1.k, s2.k, s3.k), (s1.sigma, s2.sigma, s3.sigma))
            out.append(RescaledCube.from_dyadic(case, cube))
    return out


def symbol_is_constant_on_support(cube, beta):
    """True when no plane alpha*xi1 + beta*xi2 + xi3 = 0 meets the bump supports."""
    beta = _beta(beta)
    c1, c2, c3 = cube.centers
    reach = abs(c1) + RHO + (abs(beta) + 1) * RHO
    return abs(beta * c2 + c3) > reach


# ---------------------------------------------------------------------------
# decay verification

@dataclass
class DecayReport:
    K: dict  # (case, scale) -> fitted constant
    rows: list  # (case, scale, n1, n2, n3, |C|, envelope, ratio)
    violations: list  # (case, scale, K ratio against scale 0)

    def write_csv(self, stream):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["case", "scale", "n1", "n2", "n3", "abs_C", "envelope", "ratio"])
        for row in self.rows:
            writer.writerow([row[0], row[1], row[2], row[3], row[4]] + [repr(float(v)) for v in row[5:]])


def verify_decay(cubes, n_values, beta, params=CoeffEnvelopeParams(), band=(0.25, 4.0)):
    """Smallest K with |C| <= K * envelope on the sample x grid, per case and scale.

    ``n_values`` is the list of integers used on every axis.  A (case, scale)
    pair is a violation when its K differs from the case's scale-0 K by a
    factor outside ``band``.
    """
    beta = _beta(beta)
    n = np.asarray(n_values, dtype=float)
    N1, N2, N3 = np.meshgrid(n, n, n, indexing="ij")
    env = decay_envelope(N1, N2, N3, beta, params)
    K, rows = {}, []
    for cube in cubes:
        C = np.abs(compute_C_grid(cube, n, n, n, beta))
        ratio = C / env
        key = (cube.case, cube.scale)
        K[key] = max(K.get(key, 0.0), float(np.max(ratio)))
        for idx in zip(*np.unravel_index(np.argsort(-ratio, axis=None)[:1], ratio.shape)):
            rows.append((cube.case, cube.scale, int(n[idx[0]]), int(n[idx[1]]), int(n[idx[2]]),
                         float(C[idx]), float(env[idx]), float(ratio[idx])))
    violations = []
    for (case, scale), k in sorted(K.items()):
        ref = K.get((case, 0))
        if ref is None:
            continue
        r = k / ref
        if not band[0] <= r <= band[1]:
            violations.append((case, scale, r))
    log.info("fitted K: %s", {k: f"{v:.3e}" for k, v in sorted(K.items())})
    return DecayReport(K, rows, violations)


DECAY_FIT_POINTS = (32, 45, 64, 90, 128)


def fitted_decay_order(cube, axis, beta, n_values=DECAY_FIT_POINTS, window=3):
    """Slope of -log|C| against log<n> along one coordinate axis (others 0).

    |C| oscillates with isolated near-zeros, so each fit point uses the
    largest |C(m)| over m in [n, n + window), which spans an oscillation.
    """
    n = np.asarray(n_values, dtype=float)
    m = (n[:, None] + np.arange(window)).ravel()
    zero = np.zeros(1)
    grids = [zero, zero, zero]
    grids[axis] = m
    C = np.abs(compute_C_grid(cube, *grids, beta)).reshape(n.size, window).max(axis=1)
    slope = np.polyfit(np.log(bracket(n)), np.log(C), 1)[0]
    return float(-slope)


def line_profile(cube, n3_values, beta, direction=(0.0, 0.0)):
    """|C(d1*n3, d2*n3, n3)| * <n3>^2 along a line through the origin."""
    n3 = np.asarray(n3_values, dtype=float)
    vals = []
    for v in n3:
        vals.append(abs(compute_C(cube, direction[0] * v, direction[1] * v, v, beta)))
    return np.asarray(vals) * bracket(n3) ** 2


# ---------------------------------------------------------------------------
# summability of envelope powers

@dataclass
class SummabilityReport:
    p4: float
    js: list  # block indices j
    blocks: list  # block sums over <n3> in [2^j, 2^(j+1))
    ratios: list  # ratios[i] = blocks[i + 1] / blocks[i]

    def ratio_at(self, j):
        """blocks(j) / blocks(j - 1)."""
        return self.ratios[self.js.index(j) - 1]


def summability_check(p4, params=CoeffEnvelopeParams(), beta=2.0, j_max=10, window=16):
    """Dyadic block sums of sum_n envelope(n)^p4 over <n3> in [2^j, 2^(j+1)).

    For each n3 the (n1, n2) sum runs over windows of half-width ``window``
    around the points where some envelope term has no decay in n1 or n2
    (n1 in {0, n3}, n2 in {0, beta*n3}); outside them every term decays at
    least like <.>^(-min(M) * p4) in one variable.
    """
    if not p4 > 0:
        raise ValueError("p4 must be positive")
    beta = _beta(beta)
    offs = np.arange(-window, window + 1)
    blocks = []
    js = list(range(1, j_max + 1))
    for j in js:
        total = 0.0
        lo, hi = 2**j, 2 ** (j + 1)
        for mag in range(lo - 2, hi - 2):
            for n3 in {mag, -mag}:
                n1 = np.unique(np.concatenate([offs, n3 + offs]))
                n2 = np.unique(np.concatenate([offs, np.round(beta * n3) + offs]))
                A, B = np.meshgrid(n1, n2, indexing="ij")
                total += float(np.sum(decay_envelope(A, B, float(n3), beta, params) ** p4))
        blocks.append(total)
    ratios = [b / a for a, b in zip(blocks, blocks[1:])]
    return SummabilityReport(float(p4), js, blocks, ratios)
