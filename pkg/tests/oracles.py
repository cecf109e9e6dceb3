"""Independent reference computations used by the tests.

Nothing here imports the closed forms it is meant to check.
"""

import math

import numpy as np


def step_integral(indicator, lo, hi, nodes=10**6, bisections=60):
    """Integral over [lo, hi] of a 0/1 valued function with isolated jumps.

    ``indicator(points, rows)`` returns booleans for a (k, m) array of points,
    where row i belongs to sample ``rows[i]``.  Cells of a uniform grid whose
    endpoint values agree contribute their common value times the cell width
    (a composite midpoint rule).  In the few cells where the value flips, the
    jump is located by bisection and the cell is split there.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    batch = lo.shape[0]
    frac = np.linspace(0.0, 1.0, nodes + 1)
    h = (hi - lo) / nodes
    edges = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    vals = indicator(edges, np.arange(batch))
    same = vals[:, :-1] == vals[:, 1:]
    total = h * np.sum(same & vals[:, :-1], axis=1)
    rows, cols = np.nonzero(~same)
    if rows.size:
        left = edges[rows, cols]
        right = edges[rows, cols + 1]
        left_val = vals[rows, cols]
        a, b = left.copy(), right.copy()
        for _ in range(bisections):
            mid = 0.5 * (a + b)
            move_left = indicator(mid[:, None], rows)[:, 0] == left_val
            a = np.where(move_left, mid, a)
            b = np.where(move_left, b, mid)
        jump = 0.5 * (a + b)
        piece = np.where(left_val, jump - left, right - jump)
        np.add.at(total, rows, piece)
    return total


def m_plus_oracle(beta, xi1, xi2, xi3, nodes=10**6):
    """Alpha-quadrature of 1{alpha*xi1 + beta*xi2 + xi3 > 0} over [0, 1]."""
    a = np.atleast_1d(np.asarray(xi1, dtype=float))
    c = np.atleast_1d(np.asarray(beta, dtype=float) * np.asarray(xi2) + np.asarray(xi3))
    a, c = np.broadcast_arrays(a, c)

    def ind(alpha, rows):
        return alpha * a[rows, None] + c[rows, None] > 0

    n = a.shape[0]
    return step_integral(ind, np.zeros(n), np.ones(n), nodes)


def primitive_oracle(a, c, nodes=10**5):
    """Signed quadrature of 1{t + c > 0} from 0 to a."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    a, c = np.broadcast_arrays(a, c)

    def ind(t, rows):
        return t + c[rows, None] > 0

    lo = np.minimum(a, 0.0)
    hi = np.maximum(a, 0.0)
    return np.sign(a) * step_integral(ind, lo, hi, nodes)


def periodized_pairing_oracle(f, packet, period, n_grid, images=None):
    """Trapezoid rule for int_0^L f * conj(sum_m phi(x + m L)) on an n_grid-point mesh.

    For an L-periodic f this equals the pairing over the whole line.  The
    periodic trapezoid rule is spectrally accurate for smooth periodic data.
    """
    if images is None:
        images = int(np.ceil(80 * packet.length / period)) + 1
    x = np.arange(n_grid) * (period / n_grid)
    shifts = np.arange(-images, images + 1) * period + np.round(packet.center / period) * period
    periodized = sum(packet(x + s) for s in shifts)
    return complex(np.sum(f(x) * np.conj(periodized)) * period / n_grid)


def coefficient_oracle(centers, n, beta, radius=0.45, spacing=1.0 / 3.0, panels=60, order=6):
    """Independent evaluation of the localized-symbol Fourier coefficient.

    Rebuilds the integrand from scratch: bumps exp(1 - 1/(1 - x^2)) of the given
    radius, the divisor from the shifted lattice of bump centres, and the
    symbol from the root alpha* = -(beta*xi2 + xi3)/xi1 of the linear form.
    Quadrature is composite Gauss-Legendre on uniform panels in xi1 and xi2;
    the xi3 integral is split at both kinks of the symbol for every
    (xi1, xi2) pair and uses uniform panels on each piece.
    """
    def bump(t):
        z = np.asarray(t) / radius
        out = np.zeros_like(z)
        inside = np.abs(z) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
        return out

    def psi(t):
        t = np.asarray(t, dtype=float)
        total = sum(bump(t - m * spacing) for m in range(-4, 5))
        return bump(t) / total

    def symbol(x1, s):
        # measure of alpha in [0, 1] with alpha*x1 + s > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            root = -s / x1
        pos = np.where(root <= 0, 1.0, np.where(root >= 1, 0.0, 1.0 - root))
        neg = np.where(root <= 0, 0.0, np.where(root >= 1, 1.0, root))
        return np.where(x1 > 0, pos, np.where(x1 < 0, neg, (s > 0).astype(float)))

    g, gw = np.polynomial.legendre.leggauss(order)

    def panel_rule(lo, hi, count):
        edges = np.linspace(lo, hi, count + 1)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        return (mid + half * g).ravel(), (half * gw).ravel()

    c1, c2, c3 = centers
    n1, n2, n3 = n
    x1, w1 = panel_rule(c1 - radius, c1 + radius, panels)
    x2, w2 = panel_rule(c2 - radius, c2 + radius, panels)
    total = 0j
    for a, wa in zip(x1, w1):
        fa = wa * psi(a - c1) * np.exp(-2j * np.pi * n1 * a)
        if fa == 0:
            continue
        for b, wb in zip(x2, w2):
            fb = wb * psi(b - c2) * np.exp(-2j * np.pi * n2 * b)
            if fb == 0:
                continue
            cuts = sorted({c3 - radius, c3 + radius} | {
                k for k in (-beta * b, -a - beta * b) if c3 - radius < k < c3 + radius
            })
            for lo, hi in zip(cuts, cuts[1:]):
                x3, w3 = panel_rule(lo, hi, panels)
                vals = psi(x3 - c3) * symbol(a, beta * b + x3) * np.exp(-2j * np.pi * n3 * x3)
                total += fa * fb * np.sum(w3 * vals)
    return total


def friends_bruteforce(n, depth=20):
    """Unit offsets hit by translating every dyadic subinterval of [0, 1) down to ``depth``
    by n of its own lengths."""
    out = set()
    for k in range(depth + 1):
        m = np.arange(2**k, dtype=np.int64)
        out.update(np.unique((m + n) >> k).tolist())
    return out


def weak_l1_sampled(intervals, weights, lo, hi, samples=200_001):
    """sup_lambda lambda |{F > lambda}| for F^2 = sum w 1_I / |I| on a midpoint grid of (lo, hi)."""
    x = lo + (np.arange(samples) + 0.5) * (hi - lo) / samples
    F2 = np.zeros(samples)
    for (a, b), w in zip(intervals, weights):
        F2 += w / (b - a) * ((x > a) & (x < b))
    F = np.sort(np.sqrt(F2))[::-1]
    measure = np.arange(1, samples + 1) * (hi - lo) / samples
    return float(np.max(F * measure))


def energy_bruteforce(quads, w, j, types, levels=range(-12, 13)):
    """Energy by enumerating every tree (any member subset) and every compatible family.

    Only for a handful of quadtiles.  Uses the exact tile predicates and the
    pairwise strong-disjointness test directly.
    """
    import itertools
    import math

    from trilinear_tf.dyadic import order_leq
    from trilinear_tf.tilenorms import Tree, strongly_disjoint_check

    index = {q: k for k, q in enumerate(quads)}
    length = {q: float(q.I.length) for q in quads}

    def is_tree_with(top, members, i):
        return all(order_leq(p[i], top[i]) for p in members)

    trees = set()
    for top in quads:
        trees.add((top, frozenset([top]), types[0] if types else 2))
        for i in types:
            below = [p for p in quads if order_leq(p[i], top[i])]
            for r in range(1, len(below) + 1):
                for combo in itertools.combinations(below, r):
                    trees.add((top, frozenset(combo), i))

    def weight(members):
        return sum(w[index[p]] for p in members)

    def subtree_peak(members):
        peak = max(w[index[p]] / length[p] for p in members)
        for r in range(1, len(members) + 1):
            for sub in itertools.combinations(sorted(members), r):
                for top in quads:
                    if any(is_tree_with(top, sub, i) for i in types):
                        peak = max(peak, weight(sub) / length[top])
        return peak

    best = 0.0
    for n in levels:
        admissible = [
            Tree(top, members, i) for top, members, i in trees
            if weight(members) >= 4.0**n * length[top] and subtree_peak(members) <= 4.0 ** (n + 1)
        ]

        def search(start, chosen, total):
            nonlocal best
            best = max(best, 2.0**n * math.sqrt(total))
            for k in range(start, len(admissible)):
                cand = admissible[k]
                if all(strongly_disjoint_check([cand, c], j) for c in chosen):
                    search(k + 1, chosen + [cand], total + cand.length)

        search(0, [], 0.0)
    return best


def dyadic_max_bruteforce(values, J, start, n, coarsest, chi=False, sub=64):
    """Pointwise shifted dyadic maximal function by enumerating every dyadic interval per cell.

    With chi=True the weight χ̃_{I^n} is integrated by a ``sub``-point midpoint rule per cell.
    """
    values = np.asarray(values, float)
    h = 2.0**-J
    grid_lo = start * h
    cell_lo = grid_lo + h * np.arange(values.size)
    fine = (cell_lo[:, None] + h * (np.arange(sub) + 0.5) / sub).ravel()
    fine_v = np.repeat(values, sub)
    out = np.zeros(values.size)
    for c in range(values.size):
        x = cell_lo[c] + h / 2
        for level in range(J + coarsest + 1):
            length = h * 2**level
            k = math.floor(x / length)
            a, b = (k + n) * length, (k + n + 1) * length
            if chi:
                u = (fine - (a + b) / 2) / length
                avg = float(np.sum(fine_v / np.sqrt(1 + u * u)) * h / sub / length)
            else:
                inside = (cell_lo >= a) & (cell_lo + h <= b)
                avg = float(values[inside].sum() * h / length)
            out[c] = max(out[c], avg)
    return out
