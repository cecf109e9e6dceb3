"""Wave packets adapted to tiles and their inner products with test functions.

The mother profile is defined on the Fourier side as a standard bump
exp(-1/(1 - (eta/r)^2)) with r = 0.4, so an adapted packet has Fourier support
inside 0.8*omega, strictly within 0.9*omega.  The spatial profile is the
inverse transform, computed by composite Gauss-Legendre quadrature.

A packet for the tile P = I x omega with time shift n and exponent p is

    phi(x) = |I|^(-1/p) * psi((x - x_I - n|I|) / |I|) * exp(2 pi i c_omega x)

with x_I and c_omega the centres of I and omega.
"""
import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import ShiftedDyadicInterval, Tile
from .multiplier_op import BandlimitedFn, SampledFunction
from .symbol import _gl, unit_bump

log = logging.getLogger(__name__)

# The mother profile is below 1e-16 beyond this many |I| (it is about 5e-8 at 64),
# so step functions are clipped here before pairing.
TAIL_CUTOFF = 512.0


def _interval_bounds(I):
    if isinstance(I, ShiftedDyadicInterval):
        lo, hi = I.bounds
    else:
        lo, hi = I
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ValueError(f"degenerate interval ({lo}, {hi})")
    return lo, hi


def chi_tilde(I, x):
    """(1 + ((x - x_I)/|I|)^2)^(-1/2)."""
    lo, hi = _interval_bounds(I)
    u = (np.asarray(x, dtype=float) - 0.5 * (lo + hi)) / (hi - lo)
    return 1.0 / np.sqrt(1.0 + u * u)


def _panel_rule(lo, hi, panels, order=16):
    x, w = _gl(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


@dataclass(frozen=True)
class BumpProfile:
    """Mother profile with Fourier transform radius * bump supported in (-radius, radius)."""

    radius: float = 0.4

    def __post_init__(self):
        if not 0 < self.radius < 0.45:
            raise ValueError("Fourier radius must lie in (0, 0.45) to fit inside 0.9*omega")

    def fourier(self, eta):
        return unit_bump(np.asarray(eta, dtype=float) / self.radius)

    def _rule(self, extent):
        # at least 8 nodes per oscillation of cos(2 pi eta u) over (0, radius)
        panels = max(8, math.ceil(self.radius * extent))
        return _panel_rule(0.0, self.radius, panels)

    def __call__(self, u, chunk=2048):
        """psi(u) = 2 * int_0^r psihat(eta) cos(2 pi eta u) d eta; real and even."""
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.empty(flat.shape)
        if flat.size == 0:
            return out.reshape(u.shape)
        eta, w = self._rule(float(np.max(np.abs(flat))))
        weights = 2.0 * w * self.fourier(eta)
        for start in range(0, flat.size, chunk):
            part = flat[start:start + chunk]
            out[start:start + chunk] = np.cos(2 * np.pi * np.multiply.outer(part, eta)) @ weights
        return out.reshape(u.shape)

    def l2_norm(self):
        """Plancherel: ||psi||_2^2 = int psihat^2."""
        eta, w = _panel_rule(-self.radius, self.radius, 16)
        return math.sqrt(float(np.sum(w * self.fourier(eta) ** 2)))

    def segment_integral(self, kappa, ua, ub):
        """int_ua^ub psi(u) exp(-2 pi i kappa u) du, computed on the Fourier side."""
        ua = np.clip(np.asarray(ua, dtype=float), -TAIL_CUTOFF, TAIL_CUTOFF)
        ub = np.clip(np.asarray(ub, dtype=float), -TAIL_CUTOFF, TAIL_CUTOFF)
        extent = max(float(np.max(np.abs(ua), initial=0)), float(np.max(np.abs(ub), initial=0)), 1.0)
        panels = max(8, math.ceil(2 * self.radius * extent))
        eta, w = _panel_rule(-self.radius, self.radius, panels)
        s = kappa - eta
        length = (ub - ua)[..., None]
        mid = (0.5 * (ua + ub))[..., None]
        seg = length * np.exp(-2j * np.pi * s * mid) * np.sinc(s * length)
        return seg @ (w * self.fourier(eta))

    def decay_constants(self, orders=range(0, 11), half_width=32.0, n_points=10_000):
        """max over a grid of |psi(u)| (1 + u^2)^(M/2) for each M."""
        u = np.linspace(-half_width, half_width, n_points)
        vals = np.abs(self(u))
        out = {}
        for m in orders:
            out[m] = float(np.max(vals * (1.0 + u * u) ** (m / 2)))
            log.debug("decay constant C_%d = %.3e", m, out[m])
        return out


DEFAULT_PROFILE = BumpProfile()


@dataclass(frozen=True)
class WavePacket:
    tile: Tile
    p: float = 2.0
    n: int = 0
    profile: BumpProfile = DEFAULT_PROFILE

    def __post_init__(self):
        if not 1 <= self.p < math.inf:
            raise ValueError("normalization exponent must lie in [1, inf)")
        if int(self.n) != self.n:
            raise ValueError("time shift must be an integer")

    @property
    def length(self):
        return float(self.tile.I.length)

    @property
    def center(self):
        """Centre of the translated interval I^n."""
        return float(self.tile.I.center) + self.n * self.length

    @property
    def frequency(self):
        return float(self.tile.omega.center)

    @property
    def scale(self):
        return self.length ** (-1.0 / self.p)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.length
        return self.scale * self.profile(u) * np.exp(2j * np.pi * self.frequency * x)

    def fourier(self, xi):
        xi = np.asarray(xi, dtype=float)
        d = xi - self.frequency
        return (
            self.scale * self.length * self.profile.fourier(self.length * d)
            * np.exp(-2j * np.pi * d * self.center)
        )

    def fourier_mass_outside(self, dilation=0.9, half_width=64.0, samples_per_length=8):
        """Fraction of |phi-hat|^2 outside dilation*omega, from a DFT of spatial samples."""
        n = int(2 * half_width * samples_per_length)
        dx = self.length / samples_per_length
        x = self.center + (np.arange(n) - n // 2) * dx
        vals = self(x) * np.exp(-2j * np.pi * self.frequency * x)
        spectrum = np.abs(np.fft.fft(vals)) ** 2
        freqs = np.fft.fftfreq(n, dx) + self.frequency
        lo, hi = (float(v) for v in self.tile.omega.dilate(dilation))
        outside = (freqs <= lo) | (freqs >= hi)
        return float(np.sum(spectrum[outside]) / np.sum(spectrum))


def decay_certificate(packet, m, half_width=32.0, n_points=10_000):
    """max over a grid of |phi(x)| |I|^(1/p) / chi_tilde_I(x)^m, centred on I^n.

    Scale covariance makes this a single constant per m for every tile.
    """
    x = packet.center + packet.length * np.linspace(-half_width, half_width, n_points)
    shifted = (packet.center - 0.5 * packet.length, packet.center + 0.5 * packet.length)
    ratio = np.abs(packet(x)) / packet.scale / chi_tilde(shifted, x) ** m
    return float(np.max(ratio))


def make_wave_packet(tile, p=2.0, n=0, profile=DEFAULT_PROFILE):
    return WavePacket(tile, p, int(n), profile)


@dataclass(frozen=True)
class StepFunction:
    """Finite sum of values[i] * 1_(lo_i, hi_i)."""

    intervals: tuple
    values: tuple = None

    def __post_init__(self):
        ivs = tuple((float(a), float(b)) for a, b in self.intervals)
        if any(b < a for a, b in ivs):
            raise ValueError("interval endpoints must be ordered")
        vals = (1.0,) * len(ivs) if self.values is None else tuple(complex(v) for v in self.values)
        if len(vals) != len(ivs):
            raise ValueError("one value per interval")
        object.__setattr__(self, "intervals", ivs)
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for (a, b), v in zip(self.intervals, self.values):
            out += v * ((x > a) & (x < b))
        return out

    def measure(self):
        return sum(b - a for a, b in self.intervals)


def _dft_coefficients(f):
    n = f.values.shape[0]
    coeffs = np.fft.fft(f.values) / n
    modes = np.fft.fftfreq(n, 1.0 / n).astype(np.int64)
    if n > 1:
        # split the Nyquist mode evenly so real data stays real
        nyq = n // 2
        modes = np.append(modes, nyq)
        coeffs = np.append(coeffs, 0.5 * coeffs[nyq])
        coeffs[nyq] *= 0.5
        modes[nyq] = -nyq
    return modes, coeffs


def inner_product(f, phi):
    """<f, phi> = int f * conj(phi) over the line.

    Periodic inputs pair mode by mode against the packet's Fourier transform,
    exact up to rounding.  A SampledFunction is read as its trigonometric
    interpolant.  Step functions pair segment by segment on the Fourier side.
    """
    if isinstance(f, BandlimitedFn):
        return complex(np.sum(f.coeffs * np.conj(phi.fourier(f.modes / f.period))))
    if isinstance(f, SampledFunction):
        modes, coeffs = _dft_coefficients(f)
        return complex(np.sum(coeffs * np.conj(phi.fourier(modes / f.period))))
    if isinstance(f, StepFunction):
        if not f.intervals:
            return 0j
        ab = np.array(f.intervals)
        u = (ab - phi.center) / phi.length
        kappa = phi.frequency * phi.length
        segs = phi.profile.segment_integral(kappa, u[:, 0], u[:, 1])
        phase = np.exp(-2j * np.pi * phi.frequency * phi.center)
        return complex(phi.scale * phi.length * phase * np.sum(np.asarray(f.values) * segs))
    raise TypeError(f"cannot pair {type(f).__name__} with a wave packet")


def coefficient_array(f, quads, j, n_j=0, p=2.0, profile=DEFAULT_PROFILE):
    """<f, phi_{P_j^{n_j}}> for every quadtile P in the collection."""
    return np.array(
        [inner_product(f, make_wave_packet(q[j], p, n_j, profile)) for q in quads], dtype=complex
    )


def write_coefficients_csv(stream, coeffs, j):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["quadtile", "j", "real", "imag"])
    for idx, c in enumerate(coeffs):
        writer.writerow([idx, j, repr(float(c.real)), repr(float(c.imag))])
