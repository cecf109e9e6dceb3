"""Frequency-side and time-side evaluation of the trilinear operators on a torus.

Inputs are trigonometric polynomials of period L.  On such inputs a trilinear
multiplier acts exactly: mode (k1, k2, k3) is multiplied by m(k1/L, k2/L, k3/L)
and lands on mode k1 + k2 + k3.  The time-side route evaluates the singular
integral directly by quadrature in t and serves as an independent check.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .symbol import _beta, m_plus, m_sgn


@dataclass
class BandlimitedFn:
    """Trigonometric polynomial sum_k coeffs[k] * exp(2 pi i k x / period)."""

    period: float
    modes: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=np.int64).ravel()
        self.coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if self.modes.shape != self.coeffs.shape:
            raise ValueError("modes and coeffs must have the same length")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")

    @classmethod
    def from_dict(cls, coeffs, period=1.0):
        keys = sorted(coeffs)
        return cls(period, keys, [coeffs[k] for k in keys])

    @classmethod
    def monomial(cls, k, period=1.0, amplitude=1.0):
        return cls(period, [k], [amplitude])

    @property
    def max_mode(self):
        return int(np.max(np.abs(self.modes))) if self.modes.size else 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        phase = np.exp(2j * np.pi * np.multiply.outer(x, self.modes) / self.period)
        return phase @ self.coeffs

    def sample(self, n):
        grid = uniform_grid(n, self.period)
        return SampledFunction(self.period, self(grid))

    def dilate(self, factor):
        """f(factor * x) for a positive integer factor, again of the same period."""
        if int(factor) != factor or factor < 1:
            raise ValueError("dilation factor must be a positive integer")
        return BandlimitedFn(self.period, self.modes * int(factor), self.coeffs)

    def mean(self):
        return complex(np.sum(self.coeffs[self.modes == 0]))


def uniform_grid(n, period=1.0):
    return np.arange(n) * (period / n)


@dataclass
class SampledFunction:
    period: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        n = self.values.shape[0]
        if n < 1 or n & (n - 1):
            raise ValueError("grid size must be a power of two")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sample values must be finite")

    @property
    def grid(self):
        return uniform_grid(self.values.shape[0], self.period)


@dataclass(frozen=True)
class QuadratureSpec:
    """Cutoffs and node counts for the time-side principal value integral.

    ``nodes_t`` is the Gauss-Legendre order on each t-panel; panels are one
    oscillation of the fastest input frequency long.  ``nodes_alpha`` is the
    Gauss-Legendre order of the alpha average while it is cheap (short t); for
    longer t the alpha average of each exponential is integrated exactly.
    """

    epsilon: float = 1e-4
    t_max: float = 1e3
    nodes_t: int = 16
    nodes_alpha: int = 24
    extrapolate: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < self.t_max or not np.isfinite(self.t_max):
            raise ValueError("need 0 < epsilon < t_max < inf")
        if self.nodes_t < 2 or self.nodes_alpha < 2:
            raise ValueError("node counts must be at least 2")


def _check_periods(*fs):
    periods = {f.period for f in fs}
    if len(periods) != 1:
        raise ValueError(f"inputs have different periods: {sorted(periods)}")
    return periods.pop()


def apply_trilinear(symbol, f1, f2, f3):
    """Trilinear multiplier with the given symbol applied to three trig polynomials.

    ``symbol(xi1, xi2, xi3)`` must broadcast over arrays.
    """
    L = _check_periods(f1, f2, f3)
    k1 = f1.modes[:, None, None]
    k2 = f2.modes[None, :, None]
    k3 = f3.modes[None, None, :]
    weights = symbol(k1 / L, k2 / L, k3 / L)
    amps = weights * (f1.coeffs[:, None, None] * f2.coeffs[None, :, None] * f3.coeffs[None, None, :])
    total = np.broadcast_to(k1 + k2 + k3, amps.shape).ravel()
    out_modes, inverse = np.unique(total, return_inverse=True)
    out = np.zeros(out_modes.shape, dtype=complex)
    np.add.at(out, inverse, amps.ravel())
    return BandlimitedFn(L, out_modes, out)


def reduced_symbol(params):
    beta = _beta(params)
    return lambda x1, x2, x3: m_plus(beta, x1, x2, x3)


def pv_symbol(params):
    """Multiplier of the principal value operator, normalised as 1 - 2*m_plus."""
    beta = _beta(params)
    return lambda x1, x2, x3: -m_sgn(beta, x1, x2, x3)


def apply_reduced(params, f1, f2, f3):
    return apply_trilinear(reduced_symbol(params), f1, f2, f3)


def apply_pv_frequency(params, f1, f2, f3):
    return apply_trilinear(pv_symbol(params), f1, f2, f3)


def product(f1, f2, f3):
    return apply_trilinear(lambda a, b, c: np.ones(np.broadcast_shapes(a.shape, b.shape, c.shape)), f1, f2, f3)


def _t_panels(lo, hi, width, order):
    x, w = np.polynomial.legendre.leggauss(order)
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


def _alpha_average_factors(f1, t, nodes_alpha):
    """Matrix A[t, k] = int_0^1 exp(2 pi i k alpha t / L) d alpha.

    Gauss-Legendre in alpha while |k t / L| stays under one cycle, exact
    integration of the exponential beyond that.
    """
    L = f1.period
    kt = np.multiply.outer(t, f1.modes) / L
    exact = np.exp(1j * np.pi * kt) * np.sinc(kt)
    short = np.abs(t) * max(f1.max_mode, 1) / L <= 1.0
    if np.any(short):
        x, w = np.polynomial.legendre.leggauss(nodes_alpha)
        alpha = 0.5 * (x + 1.0)
        phase = np.exp(2j * np.pi * kt[short][:, :, None] * alpha)
        exact[short] = phase @ (0.5 * w)
    return exact


def _paired_integral(f1, f2, f3, beta, x, t, w, nodes_alpha, chunk=4096):
    """sum_t w_t [F(x, t) - F(x, -t)] / t with F the integrand of the operator."""
    L = f1.period
    e1 = np.exp(2j * np.pi * np.multiply.outer(f1.modes, x) / L) * f1.coeffs[:, None]
    e2 = np.exp(2j * np.pi * np.multiply.outer(f2.modes, x) / L) * f2.coeffs[:, None]
    e3 = np.exp(2j * np.pi * np.multiply.outer(f3.modes, x) / L) * f3.coeffs[:, None]
    out = np.zeros(x.shape, dtype=complex)
    for start in range(0, t.size, chunk):
        tc = t[start:start + chunk]
        wc = w[start:start + chunk] / tc
        for sign in (1.0, -1.0):
            ts = sign * tc
            avg1 = _alpha_average_factors(f1, ts, nodes_alpha) @ e1
            s2 = np.exp(2j * np.pi * np.multiply.outer(beta * ts, f2.modes) / L) @ e2
            s3 = np.exp(2j * np.pi * np.multiply.outer(ts, f3.modes) / L) @ e3
            out += sign * (wc @ (avg1 * s2 * s3))
    return out


def apply_timedomain_pv(params, f1, f2, f3, q=None, n_points=64):
    """Principal value integral evaluated by quadrature in t on a uniform grid.

    Computes (i/pi) * int_{eps<|t|<t_max} [int_0^1 f1(x + alpha t) d alpha]
    f2(x + beta t) f3(x + t) dt/t, pairing t with -t so that the odd kernel is
    integrated against a smooth difference.  The factor i/pi makes the
    multiplier 1 - 2*m_plus, the same normalisation as ``pv_symbol``.

    With ``q.extrapolate`` the leading linear dependence on epsilon is removed
    by one halving step (Richardson in epsilon).
    """
    q = q or QuadratureSpec()
    beta = _beta(params)
    L = _check_periods(f1, f2, f3)
    x = uniform_grid(n_points, L)
    bandwidth = (f1.max_mode + abs(beta) * f2.max_mode + f3.max_mode) / L
    panel = 1.0 / max(bandwidth, 1.0 / q.t_max)
    t, w = _t_panels(q.epsilon, q.t_max, panel, q.nodes_t)
    vals = _paired_integral(f1, f2, f3, beta, x, t, w, q.nodes_alpha)
    if q.extrapolate:
        t_in, w_in = _t_panels(q.epsilon / 2, q.epsilon, q.epsilon, q.nodes_t)
        vals = vals + 2.0 * _paired_integral(f1, f2, f3, beta, x, t_in, w_in, q.nodes_alpha)
    return SampledFunction(L, 1j / np.pi * vals)


def product_identity_check(params, f1, f2, f3, q=None, n_points=64):
    """max over the grid of |f1 f2 f3 - T_pv(f1, f2, f3) - 2 T_reduced(f1, f2, f3)|.

    T_pv comes from the time-side quadrature, T_reduced from the exact
    multiplier action.
    """
    return pv_cross_check(params, f1, f2, f3, q, n_points)[1]


def pv_cross_check(params, f1, f2, f3, q=None, n_points=64):
    """One time-side evaluation, two checks.

    Returns the relative L2 distance between the quadrature and the exact
    multiplier action of the principal value operator, and the product
    identity residual.
    """
    L = _check_periods(f1, f2, f3)
    x = uniform_grid(n_points, L)
    pv = apply_timedomain_pv(params, f1, f2, f3, q, n_points).values
    exact = apply_pv_frequency(params, f1, f2, f3)(x)
    prod = f1(x) * f2(x) * f3(x)
    reduced = apply_reduced(params, f1, f2, f3)(x)
    return relative_l2_error(pv, exact), float(np.max(np.abs(prod - pv - 2.0 * reduced)))


def relative_l2_error(approx, reference):
    approx = np.asarray(approx)
    reference = np.asarray(reference)
    return float(np.linalg.norm(approx - reference) / np.linalg.norm(reference))


def lp_norm(f, p):
    """Riemann-sum L^p norm over one period; p may be math.inf or in (0, 1)."""
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    if not p > 0:
        raise ValueError(f"p must be positive, got {p}")
    mean = np.mean(np.abs(f.values) ** p)
    return float((f.period * mean) ** (1.0 / p))


def _as_fraction(p):
    if p == math.inf:
        return math.inf
    if isinstance(p, (Fraction, int)):
        return Fraction(p)
    if isinstance(p, str):
        return Fraction(p)
    return Fraction(float(p)).limit_denominator(10**6)


def _reciprocal(p):
    return Fraction(0) if p == math.inf else 1 / p


def validate_exponents(p1, p2, p3):
    """Check the admissible exponent range; returns (accepted, p).

    p is given by 1/p = 1/p1 + 1/p2 + 1/p3 and is accepted when 1/2 < p < inf
    and p2 p3/(p2 + p3) > 2/3.  Float inputs are read as the nearest fraction
    with denominator at most 10^6 so that 4/3 typed as 1.3333333333333333
    lands exactly on the boundary.
    """
    ps = [_as_fraction(p) for p in (p1, p2, p3)]
    for p in ps:
        if p != math.inf and not p > 1:
            raise ValueError(f"exponents must lie in (1, inf], got {float(p)}")
    inv = sum(_reciprocal(p) for p in ps)
    p = math.inf if inv == 0 else float(1 / inv)
    inv23 = _reciprocal(ps[1]) + _reciprocal(ps[2])
    accepted = 0 < inv < 2 and inv23 < Fraction(3, 2)
    return bool(accepted), p


@dataclass
class ResultRecord:
    trial: int
    seed: int
    p1: float
    p2: float
    p3: float
    p: float
    beta: float
    modes: int
    ratio: float

    FIELDS = ("trial", "seed", "p1", "p2", "p3", "p", "beta", "modes", "ratio")

    def as_row(self):
        return [getattr(self, k) for k in self.FIELDS]


@dataclass
class HolderSweepConfig:
    exponents: tuple = (4, 4, 4)
    beta: float = 2.0
    trials: int = 200
    modes: int = 16
    seed: int = 0
    period: float = 1.0
    oversample: int = 8
    dilation: int = 1


def trial_rng(seed, index):
    """Per-trial generator derived from (master seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def random_bandlimited(rng, modes, period=1.0, mean_zero=True, max_mode=None):
    """Distinct modes from [-max_mode, max_mode], complex Gaussian amplitudes, unit L2 norm."""
    max_mode = modes if max_mode is None else max_mode
    pool = np.arange(-max_mode, max_mode + 1)
    if mean_zero:
        pool = pool[pool != 0]
    ks = np.sort(rng.choice(pool, size=modes, replace=False))
    amps = rng.normal(size=modes) + 1j * rng.normal(size=modes)
    amps /= np.sqrt(period * np.sum(np.abs(amps) ** 2))
    return BandlimitedFn(period, ks, amps)


def grid_size_for(bandwidth, oversample):
    n = 2
    while n < oversample * max(bandwidth, 1):
        n *= 2
    return n


def holder_ratio(params, exponents, f1, f2, f3, oversample=8):
    """||T_reduced(f1, f2, f3)||_p / prod ||f_i||_{p_i} on a common grid."""
    accepted, p = validate_exponents(*exponents)
    if not accepted:
        raise ValueError(f"exponent tuple {exponents} is outside the admissible range")
    out = apply_reduced(params, f1, f2, f3)
    n = grid_size_for(out.max_mode + max(f.max_mode for f in (f1, f2, f3)), oversample)
    num = lp_norm(out.sample(n), p)
    den = 1.0
    for f, pi in zip((f1, f2, f3), exponents):
        den *= lp_norm(f.sample(n), float(pi))
    return num / den


def holder_ratio_sweep(config):
    accepted, p = validate_exponents(*config.exponents)
    if not accepted:
        raise ValueError(f"exponent tuple {config.exponents} is outside the admissible range")
    p1, p2, p3 = (float(v) for v in config.exponents)
    rows = []
    for trial in range(config.trials):
        rng = trial_rng(config.seed, trial)
        fs = [random_bandlimited(rng, config.modes, config.period) for _ in range(3)]
        if config.dilation != 1:
            fs = [f.dilate(config.dilation) for f in fs]
        ratio = holder_ratio(config.beta, config.exponents, *fs, oversample=config.oversample)
        rows.append(ResultRecord(trial, config.seed, p1, p2, p3, p, config.beta, config.modes, ratio))
    return rows
