"""Averaged half-plane symbol and the distributional identities of its primitive.

The symbol of the reduced operator is

    m_plus(xi) = |{alpha in [0, 1] : alpha*xi1 + beta*xi2 + xi3 > 0}|

and the sign form is m_sgn = 2*m_plus - 1.  Both are evaluated in closed form
with a clamp instead of a case split.  Everything here broadcasts over numpy
arrays.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SymbolParams:
    beta: float

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta in (0.0, 1.0):
            raise ValueError(f"beta must be finite and not 0 or 1, got {self.beta}")


def _beta(params):
    """Accept a SymbolParams, a scalar beta, or an array of betas."""
    if isinstance(params, SymbolParams):
        return params.beta
    beta = np.asarray(params, dtype=float)
    if beta.ndim == 0:
        return SymbolParams(float(beta)).beta
    if np.any((beta == 0) | (beta == 1)) or not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite and not 0 or 1")
    return beta


def m_plus(params, xi1, xi2, xi3):
    """Measure of the alpha in [0, 1] with alpha*xi1 + beta*xi2 + xi3 > 0.

    ``params`` is a SymbolParams or a bare beta.  The boundary value of the
    indicator at 0 is taken to be 0, so m_plus(0, 0, 0) = 0.
    """
    beta = _beta(params)
    a = np.asarray(xi1, dtype=float)
    c = beta * np.asarray(xi2, dtype=float) + np.asarray(xi3, dtype=float)
    a, c = np.broadcast_arrays(a, c)
    safe_a = np.where(a == 0, 1.0, a)
    with np.errstate(over="ignore"):
        root = np.clip(-c / safe_a, 0.0, 1.0)
    out = np.where(a > 0, 1.0 - root, root)
    out = np.where(a == 0, (c > 0).astype(float), out)
    return out[()] if out.ndim == 0 else out


def m_sgn(params, xi1, xi2, xi3):
    """Average over alpha in [0, 1] of sgn(alpha*xi1 + beta*xi2 + xi3)."""
    return 2.0 * m_plus(params, xi1, xi2, xi3) - 1.0


def primitive_G(a, c):
    """Signed integral of t -> 1{t + c > 0} from 0 to a.

    For a >= 0 the indicator is on over (max(-c, 0), a), giving
    a - clamp(-c, 0, a).  For a < 0 the integral runs backwards over (a, 0) and
    picks up -(0 - clamp(-c, a, 0)).
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    a, c = np.broadcast_arrays(a, c)
    pos = a - np.clip(-c, 0.0, np.maximum(a, 0.0))
    neg = np.clip(-c, np.minimum(a, 0.0), 0.0)
    out = np.where(a >= 0, pos, neg)
    return out[()] if out.ndim == 0 else out


# Distributional identities for second derivatives of G(xi1, beta*xi2 + xi3).
# Each entry: differentiated variables, a beta-dependent factor, and the
# signed delta terms.  A delta term is the linear form whose zero set carries
# the point mass: (1, beta, 1) for xi1 + beta*xi2 + xi3, (0, beta, 1) for
# beta*xi2 + xi3.
_FULL = (1.0, None, 1.0)
_PARTIAL = (0.0, None, 1.0)

DELTA_IDENTITIES = {
    "a": ((2, 2), lambda b: 1.0, ((1, _FULL), (-1, _PARTIAL))),
    "b": ((1, 2), lambda b: b, ((1, _FULL), (-1, _PARTIAL))),
    "c": ((0, 2), lambda b: 1.0, ((1, _FULL),)),
    "d": ((1, 1), lambda b: b * b, ((1, _FULL), (-1, _PARTIAL))),
    "e": ((0, 1), lambda b: b, ((1, _FULL),)),
    "f": ((0, 0), lambda b: 1.0, ((1, _FULL),)),
}

MOLLIFIER_WIDTHS = (0.2, 0.1, 0.05, 0.025)


def unit_bump(x, deriv=0):
    """exp(-1/(1 - x^2)) on (-1, 1) and its first two derivatives."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1
    xs = np.where(inside, x, 0.0)
    q = 1.0 - xs * xs
    val = np.where(inside, np.exp(-1.0 / q), 0.0)
    if deriv == 0:
        return val
    g1 = -2.0 * xs / q**2
    if deriv == 1:
        return g1 * val
    if deriv == 2:
        g2 = -(2.0 + 6.0 * xs * xs) / q**3
        return (g2 + g1 * g1) * val
    raise ValueError("only derivatives up to order 2 are available")


_NODES_CACHE = {}


def _gl(n):
    if n not in _NODES_CACHE:
        _NODES_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _NODES_CACHE[n]


def _gl_on_pieces(breaks, n):
    """Gauss-Legendre nodes and weights on consecutive pieces of sorted breaks."""
    x, w = _gl(n)
    breaks = np.asarray(breaks, dtype=float)
    lo, hi = breaks[:-1], breaks[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


_BUMP_MASS = None


def bump_mass():
    global _BUMP_MASS
    if _BUMP_MASS is None:
        x, w = _gl_on_pieces([-1.0, 0.0, 1.0], 200)
        _BUMP_MASS = float(np.sum(w * unit_bump(x)))
    return _BUMP_MASS


def mollifier(s, width):
    """Unit-mass C-infinity bump supported on [-width, width]."""
    return unit_bump(np.asarray(s) / width) / (width * bump_mass())


class _TestFunction:
    """Scaled bump phi((u - center)/radius) with optional mollification of its derivatives."""

    def __init__(self, center, radius, width=None, mollifier_nodes=160):
        self.center = float(center)
        self.radius = float(radius)
        self.width = width
        self.mollifier_nodes = mollifier_nodes

    def support(self):
        pad = self.width or 0.0
        return self.center - self.radius - pad, self.center + self.radius + pad

    def raw(self, u, deriv=0):
        z = (np.asarray(u, dtype=float) - self.center) / self.radius
        return unit_bump(z, deriv) / self.radius**deriv

    def kernel(self, u, deriv):
        """deriv-th derivative, averaged against the mollifier when a width is set."""
        if self.width is None:
            return self.raw(u, deriv)
        s, ws = _gl_on_pieces([-self.width, 0.0, self.width], self.mollifier_nodes // 2)
        u = np.asarray(u, dtype=float)
        vals = self.raw(u[..., None] + s, deriv)
        return vals @ (ws * mollifier(s, self.width))


def _form_coeffs(form, beta):
    return np.array([form[0], beta, form[2]])


def _kink_breaks(var, point, beta, lo, hi):
    """Points in (lo, hi) where G is not smooth as a function of coordinate var."""
    out = [lo, hi]
    for form in (_FULL, _PARTIAL):
        coef = _form_coeffs(form, beta)
        if coef[var] == 0:
            continue
        rest = sum(coef[i] * point[i] for i in range(3) if i != var)
        root = -rest / coef[var]
        if lo < root < hi:
            out.append(root)
    return np.sort(out)


def _G_at(beta, xi1, xi2, xi3):
    return primitive_G(xi1, beta * np.asarray(xi2) + np.asarray(xi3))


def delta_identity_sides(identity, params, point, radius=1.5, width=None, nodes=200):
    """Both sides of one distributional identity paired with a test bump.

    ``point`` fixes all three frequency variables; the differentiated ones are
    integrated against bumps of the given radius centred at their entries.  The
    left side is the pairing of G with the test function's derivatives (each
    averaged against a mollifier of the given width if one is set).  The right
    side is the delta pairing read off the identity table.
    """
    if identity not in DELTA_IDENTITIES:
        raise ValueError(f"unknown identity {identity!r}; expected one of a-f")
    beta = _beta(params)
    point = [float(v) for v in point]
    (v1, v2), factor_fn, terms = DELTA_IDENTITIES[identity]
    factor = factor_fn(beta)

    if v1 == v2:
        phi = _TestFunction(point[v1], radius, width)
        lo, hi = phi.support()
        u, wu = _gl_on_pieces(_kink_breaks(v1, point, beta, lo, hi), nodes)
        args = [np.full_like(u, point[i]) for i in range(3)]
        args[v1] = u
        lhs = float(np.sum(wu * _G_at(beta, *args) * phi.kernel(u, 2)))
        rhs = 0.0
        for sign, form in terms:
            coef = _form_coeffs(form, beta)
            rest = sum(coef[i] * point[i] for i in range(3) if i != v1)
            root = -rest / coef[v1]
            rhs += sign * float(phi.raw(root)) / abs(coef[v1])
        return lhs, float(factor * rhs)

    lhs = 0.0
    outer = _TestFunction(point[v1], radius, width)
    inner = _TestFunction(point[v2], radius, width)
    lo1, hi1 = outer.support()
    lo2, hi2 = inner.support()
    u1, w1 = _gl_on_pieces([lo1, point[v1], hi1], nodes)
    k1 = outer.kernel(u1, 1)
    for a, wa, ka in zip(u1, w1, k1):
        if ka == 0.0:
            continue
        pt = list(point)
        pt[v1] = a
        u2, w2 = _gl_on_pieces(_kink_breaks(v2, pt, beta, lo2, hi2), nodes)
        args = [np.full_like(u2, pt[i]) for i in range(3)]
        args[v2] = u2
        lhs += wa * ka * float(np.sum(w2 * _G_at(beta, *args) * inner.kernel(u2, 1)))

    v, wv = _gl_on_pieces([point[v1] - radius, point[v1], point[v1] + radius], nodes)
    rhs = 0.0
    for sign, form in terms:
        coef = _form_coeffs(form, beta)
        rest = sum(coef[i] * point[i] for i in range(3) if i not in (v1, v2))
        root = -(rest + coef[v1] * v) / coef[v2]
        rhs += sign * float(np.sum(wv * outer.raw(v) * inner.raw(root))) / abs(coef[v2])
    return float(lhs), float(factor * rhs)


def verify_delta_identity(identity, params, point, radius=1.5, width=None, nodes=200):
    """Absolute residual |<d^2 G, phi> - <rhs, phi>| for identity a-f."""
    lhs, rhs = delta_identity_sides(identity, params, point, radius, width, nodes)
    return abs(lhs - rhs)


def delta_width_sweep(identity, params, point, widths=MOLLIFIER_WIDTHS, radius=1.5, nodes=200):
    """Mollified residuals over a width sweep and the observed orders between steps."""
    residuals = np.array(
        [verify_delta_identity(identity, params, point, radius, w, nodes) for w in widths]
    )
    ratios = np.asarray(widths[:-1]) / np.asarray(widths[1:])
    orders = np.log(residuals[:-1] / residuals[1:]) / np.log(ratios)
    return residuals, orders
