"""Independent reference implementations used only by the tests.

Nothing here imports the package's own channel or matching code, so an
agreement between the two is a genuine cross-check.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# --------------------------------------------------------------------------
# Reflection response


def reflection(g, kex, kin, gamma, delta, state):
    """L_q(delta) written out directly from the rational expression."""
    z = complex(-kex + kin, -delta)
    n = complex(kex + kin, -delta)
    if state == 1:
        c = g * g / complex(gamma, -delta)
        z, n = z + c, n + c
    return z / n


def delay_by_derivative(g, kex, kin, gamma, state, h=1e-6):
    """tau = i L'(0) / L(0) with a central complex difference."""
    d = (reflection(g, kex, kin, gamma, h, state) - reflection(g, kex, kin, gamma, -h, state)) / (2 * h)
    return (1j * d / reflection(g, kex, kin, gamma, 0.0, state)).real


def overlap_by_quad(shift, width):
    """<f(t) | f(t - shift)> for a unit-normalized Gaussian amplitude of width ``width``."""
    from scipy.integrate import quad

    norm = (math.pi * width**2) ** -0.5
    val, _ = quad(
        lambda t: norm * math.exp(-(t**2) / (2 * width**2) - (t - shift) ** 2 / (2 * width**2)),
        -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12,
    )
    return val


# --------------------------------------------------------------------------
# Density-matrix twirl


def element_factor(k, l, W, outcome):
    """Outcome-resolved factor on |A_k><A_l|, transcribed from the tabulated values.

    The (0, 4) L entry uses the trace-consistent (1 + 2 W2 + W4) / 4.
    """
    a, b = min(k, l), max(k, l)
    W1, W2, W3, W4 = W[1], W[2], W[3], W[4]
    table = {
        (0, 0): ((1 + W2) / 2, (1 - W2) / 2),
        (4, 4): ((1 + W2) / 2, (1 - W2) / 2),
        (1, 1): ((1 - W1) / 2, (1 + W1) / 2),
        (3, 3): ((1 - W1) / 2, (1 + W1) / 2),
        (2, 2): (1.0, 0.0),
        (0, 1): ((1 - 2 * W1 + W2) / 4, (1 - W2) / 4),
        (3, 4): ((1 - 2 * W1 + W2) / 4, (1 - W2) / 4),
        (1, 2): ((1 - W1) / 2, 0.0),
        (2, 3): ((1 - W1) / 2, 0.0),
        (0, 2): ((1 + W2) / 2, 0.0),
        (2, 4): ((1 + W2) / 2, 0.0),
        (1, 3): ((1 - 2 * W1 + W2) / 4, (1 + 2 * W1 + W2) / 4),
        (0, 3): ((1 - W1 + W2 - W3) / 4, (1 + W1 - W2 - W3) / 4),
        (1, 4): ((1 - W1 + W2 - W3) / 4, (1 + W1 - W2 - W3) / 4),
        (0, 4): ((1 + 2 * W2 + W4) / 4, (1 - 2 * W2 + W4) / 4),
    }
    return table[(a, b)][outcome]


def _pauli_x(bits, w):
    """Dense X-string on w qubits; bit i of ``bits`` acts on qubit i."""
    X = np.array([[0, 1], [1, 0]], dtype=float)
    I = np.eye(2)
    out = np.ones((1, 1))
    for i in reversed(range(w)):
        out = np.kron(out, X if bits >> i & 1 else I)
    return out


def _instrument(rho, W, w, outcome):
    """Schur-multiplier measurement branch acting on a dense w-qubit operator."""
    n = 1 << w
    pop = [bin(x).count("1") for x in range(n)]
    F = np.array([[element_factor(pop[x], pop[y], W, outcome) for y in range(n)] for x in range(n)])
    return F * rho


def dense_twirl(W, w, rng=None):
    """Pauli-twirled measurement as ``({(mask, flip): probability}, diagnostics)``.

    Every branch of the instrument is conjugated by each X-string with the
    reported outcome relabelled by the string's parity, using dense
    2^w x 2^w operators.  The twirled branch for outcome ``o`` is then fitted
    to ``sum_{a,f} q(a,f) Z^a P_{o^f} rho P_{o^f} Z^a`` by least squares over
    the parity-diagonal matrix units, and a mask and its complement are
    merged.  ``diagnostics`` holds the fit residual on the parity-diagonal
    block, the largest parity-off-diagonal coherence that survives (dropped
    by the frame model) and the deviation of the twirled map from a Schur
    multiplier on a random input.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = 1 << w
    par = np.array([bin(x).count("1") & 1 for x in range(n)])
    X = [_pauli_x(b, w) for b in range(n)]
    J = np.ones((n, n))
    R = rng.normal(size=(n, n))

    def twirled(rho, o):
        T = np.zeros((n, n))
        for b in range(n):
            T += X[b] @ _instrument(X[b] @ rho @ X[b], W, w, o ^ par[b]) @ X[b]
        return T / n

    same = par[:, None] == par[None, :]
    schur_dev = 0.0
    rows, rhs = {0: [], 1: []}, {0: [], 1: []}
    odd_leak = 0.0
    for o in (0, 1):
        T = twirled(J, o)
        schur_dev = max(schur_dev, float(np.abs(twirled(R, o) - T * R).max()))
        odd_leak = max(odd_leak, float(np.abs(T[~same]).max()))
        for x, y in zip(*np.nonzero(same)):
            f = o ^ par[x]
            rows[f].append([(-1) ** (bin(a & (x ^ y)).count("1") & 1) for a in range(n)])
            rhs[f].append(T[x, y])
    dist = {}
    resid = 0.0
    full = n - 1
    for f in (0, 1):
        A = np.array(rows[f], dtype=float)
        bvec = np.array(rhs[f])
        q, *_ = np.linalg.lstsq(A, bvec, rcond=None)
        resid = max(resid, float(np.abs(A @ q - bvec).max()))
        for a in range(n):
            rep = min(a, a ^ full, key=lambda m: (bin(m).count("1"), m))
            dist[(rep, f)] = dist.get((rep, f), 0.0) + float(q[a])
    return dist, {"residual": resid, "odd_coherence": odd_leak, "schur_deviation": schur_dev}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# --------------------------------------------------------------------------
# Matching


def brute_force_pairing(cost, boundary):
    """Minimum total cost over all ways to pair defects or send them to the boundary.

    ``cost[i][j]`` is the pair cost, ``boundary[i]`` the boundary cost.
    """
    k = len(boundary)

    best = math.inf

    def go(remaining, acc):
        nonlocal best
        if acc >= best:
            return
        if not remaining:
            best = acc
            return
        i, rest = remaining[0], remaining[1:]
        go(rest, acc + boundary[i])
        for idx, j in enumerate(rest):
            go(rest[:idx] + rest[idx + 1:], acc + cost[i][j])

    go(tuple(range(k)), 0)
    return best


def brute_force_matching(edges, n):
    """Maximum-weight matching weight by enumeration (small graphs only)."""
    best = 0
    for r in range(len(edges) + 1):
        for sub in itertools.combinations(edges, r):
            seen = set()
            ok = True
            for u, v, _ in sub:
                if u in seen or v in seen:
                    ok = False
                    break
                seen.update((u, v))
            if ok:
                best = max(best, sum(wt for *_, wt in sub))
    return best
