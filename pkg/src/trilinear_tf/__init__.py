"""Numerical experiments for a trilinear multiplier with a half-plane averaged symbol.

Submodules: symbol, multiplier_op, dyadic, wavepacket, fourier_coeff,
tilenorms, maximal, experiments, cli.
"""

__version__ = "0.1.0"
