"""Numba kernels for the Monte Carlo engines.

All randomness is passed in as pre-drawn arrays so the kernels are pure
functions of their inputs; acceptance uses tabulated probabilities indexed by
the integer parts of the local energy change, so there is no exp() in the
inner loops.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# constrained cell model
# ---------------------------------------------------------------------------

_codes = np.arange(8)
S1 = np.where(_codes & 1, -1, 1).astype(np.int8)
S2 = np.where(_codes & 2, -1, 1).astype(np.int8)
S3 = np.where(_codes & 4, -1, 1).astype(np.int8)
S4 = (S1 * S2 * S3).astype(np.int8)
PAIR_MASKS = np.array([0b011, 0b101, 0b110, 0b001, 0b010, 0b100], dtype=np.uint8)
for _a in (S1, S2, S3, S4, PAIR_MASKS):
    _a.flags.writeable = False


def cell_acceptance_tables(beta: float, j2: float, j3: float):
    """P(accept) and dH tabulated over the integer move deltas (d1, d2, d3).

    d1 in {-8..8} even, d2 and d3 in {-4..4} even; dH = -(d1 + j2 d2 + j3 d3).
    """
    d1 = np.arange(-8, 9, 2).reshape(-1, 1, 1)
    d2 = np.arange(-4, 5, 2).reshape(1, -1, 1)
    d3 = np.arange(-4, 5, 2).reshape(1, 1, -1)
    gain = d1 + j2 * d2 + j3 * d3
    acc = np.minimum(1.0, np.exp(beta * gain))
    return np.ascontiguousarray(acc.ravel()), np.ascontiguousarray(-gain.ravel())


@njit(cache=True, nogil=True)
def sweep_cell(state, eta_x, eta_y, eta2, eta3, right, left, up, down,
               acc, dh, cells, masks, urand, k0, n_moves):
    """Run n_moves random pair-flip proposals; returns the summed dH of accepted moves."""
    de = 0.0
    for t in range(n_moves):
        k = k0 + t
        c = cells[k]
        old = state[c]
        new = old ^ PAIR_MASKS[masks[k]]
        rp = right[c]
        d1 = 0
        if rp == c:  # L == 1: bonds close onto the same cell
            d1 += eta_x[c] * (S4[new] * S2[new] - S4[old] * S2[old])
            d1 += eta_y[c] * (S1[new] * S3[new] - S1[old] * S3[old])
        else:
            lp = left[c]
            upc = up[c]
            dnc = down[c]
            d1 += eta_x[c] * (S4[new] - S4[old]) * S2[state[rp]]
            d1 += eta_x[lp] * S4[state[lp]] * (S2[new] - S2[old])
            d1 += eta_y[c] * (S1[new] - S1[old]) * S3[state[upc]]
            d1 += eta_y[dnc] * S1[state[dnc]] * (S3[new] - S3[old])
        d2 = eta2[c] * (S1[new] * S2[new] - S1[old] * S2[old])
        d3 = eta3[c] * (S1[new] * S4[new] - S1[old] * S4[old])
        idx = (((d1 + 8) >> 1) * 5 + ((d2 + 4) >> 1)) * 5 + ((d3 + 4) >> 1)
        if urand[k] < acc[idx]:
            state[c] = new
            de += dh[idx]
    return de


@njit(cache=True, nogil=True)
def fourier_cell(state, cs, sn):
    """(sum s, Re and Im of sum s e^{i k x}) over all 4 L^2 spins.

    cs/sn have shape (4, L): per spin slot and per cell column, the phase at
    that spin's x position.
    """
    n = state.shape[0]
    L = cs.shape[1]
    m0 = 0
    re = 0.0
    im = 0.0
    for c in range(n):
        ix = c % L
        s = state[c]
        a, b, g, e = S1[s], S2[s], S3[s], S4[s]
        m0 += a + b + g + e
        re += a * cs[0, ix] + b * cs[1, ix] + g * cs[2, ix] + e * cs[3, ix]
        im += a * sn[0, ix] + b * sn[1, ix] + g * sn[2, ix] + e * sn[3, ix]
    return m0, re, im


@njit(cache=True, nogil=True)
def energy_cell(state, eta_x, eta_y, eta2, eta3, right, up, j2, j3):
    tot = 0.0
    n = state.shape[0]
    for c in range(n):
        s = state[c]
        tot += eta_x[c] * S4[s] * S2[state[right[c]]]
        tot += eta_y[c] * S1[s] * S3[state[up[c]]]
        tot += j2 * eta2[c] * S1[s] * S2[s]
        tot += j3 * eta3[c] * S1[s] * S4[s]
    return -tot


@njit(cache=True, nogil=True)
def sweep_cell_stack(states, perm, eta_x, eta_y, eta2, eta3, right, left, up, down,
                     accs, dhs, cells, masks, urand, k0, n_moves, de_out):
    """Advance every replica; slot i uses the random stream of replica perm[i]."""
    for i in range(states.shape[0]):
        r = perm[i]
        de_out[i] += sweep_cell(states[i], eta_x, eta_y, eta2, eta3, right, left,
                                up, down, accs[i], dhs[i], cells[r], masks[r],
                                urand[r], k0, n_moves)


@njit(cache=True, nogil=True)
def fourier_cell_stack(states, cs, sn, out):
    for i in range(states.shape[0]):
        m0, re, im = fourier_cell(states[i], cs, sn)
        out[i, 0] = m0
        out[i, 1] = re
        out[i, 2] = im


@njit(cache=True, nogil=True)
def sweep_cell_hist(state, eta_x, eta_y, eta2, eta3, right, left, up, down,
                    acc, dh, cells, masks, urand, n_sweeps, moves_per_sweep,
                    pow8, counts):
    """Sweep and histogram the joint cell-state index after every sweep."""
    for s in range(n_sweeps):
        sweep_cell(state, eta_x, eta_y, eta2, eta3, right, left, up, down,
                   acc, dh, cells, masks, urand, s * moves_per_sweep, moves_per_sweep)
        idx = 0
        for c in range(state.shape[0]):
            idx += state[c] * pow8[c]
        counts[idx] += 1


# ---------------------------------------------------------------------------
# square-lattice reference model (single-spin flips)
# ---------------------------------------------------------------------------

def square_acceptance_tables(beta: float):
    """Tables over d = s * (sum eta s_nb) in {-4..4}: dH = 2 d."""
    d = np.arange(-4, 5)
    acc = np.minimum(1.0, np.exp(-beta * 2.0 * d))
    return np.ascontiguousarray(acc), np.ascontiguousarray(2.0 * d.astype(np.float64))


@njit(cache=True, nogil=True)
def sweep_square(spins, eta_x, eta_y, right, left, up, down,
                 acc, dh, cells, urand, k0, n_moves):
    de = 0.0
    for t in range(n_moves):
        k = k0 + t
        c = cells[k]
        s = spins[c]
        rp = right[c]
        if rp == c:  # L == 1: both bonds are self-loops, flips cost nothing
            h = 0
        else:
            h = (eta_x[c] * spins[rp] + eta_x[left[c]] * spins[left[c]]
                 + eta_y[c] * spins[up[c]] + eta_y[down[c]] * spins[down[c]])
        d = s * h
        if urand[k] < acc[d + 4]:
            spins[c] = -s
            de += dh[d + 4]
    return de


@njit(cache=True, nogil=True)
def fourier_square(spins, cs, sn):
    n = spins.shape[0]
    L = cs.shape[0]
    m0 = 0
    re = 0.0
    im = 0.0
    for c in range(n):
        ix = c % L
        s = spins[c]
        m0 += s
        re += s * cs[ix]
        im += s * sn[ix]
    return m0, re, im


@njit(cache=True, nogil=True)
def energy_square(spins, eta_x, eta_y, right, up):
    tot = 0.0
    for c in range(spins.shape[0]):
        tot += spins[c] * (eta_x[c] * spins[right[c]] + eta_y[c] * spins[up[c]])
    return -float(tot)


@njit(cache=True, nogil=True)
def sweep_square_stack(states, perm, eta_x, eta_y, right, left, up, down,
                       accs, dhs, cells, urand, k0, n_moves, de_out):
    for i in range(states.shape[0]):
        r = perm[i]
        de_out[i] += sweep_square(states[i], eta_x, eta_y, right, left, up, down,
                                  accs[i], dhs[i], cells[r], urand[r], k0, n_moves)


@njit(cache=True, nogil=True)
def fourier_square_stack(states, cs, sn, out):
    for i in range(states.shape[0]):
        m0, re, im = fourier_square(states[i], cs, sn)
        out[i, 0] = m0
        out[i, 1] = re
        out[i, 2] = im


# ---------------------------------------------------------------------------
# exact minimum-weight pairing by subset dynamic programming
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def pairing_dp(w, wb):
    """Minimum-cost partition of defects into pairs (cost w[i,j]) and
    boundary singles (cost wb[i]).

    Returns (best cost, choice array): choice[mask] = j if the lowest set
    defect of ``mask`` pairs with defect j, or -1 if it goes to the boundary.
    """
    n = wb.shape[0]
    size = 1 << n
    f = np.full(size, np.inf)
    choice = np.full(size, -2, dtype=np.int8)
    f[0] = 0.0
    for m in range(1, size):
        i = 0
        while not (m >> i) & 1:
            i += 1
        base = m & ~(1 << i)
        best = wb[i] + f[base]
        arg = -1
        rest = base >> (i + 1)
        j = i + 1
        while rest:
            if rest & 1:
                v = w[i, j] + f[base & ~(1 << j)]
                if v < best:
                    best = v
                    arg = j
            rest >>= 1
            j += 1
        f[m] = best
        choice[m] = arg
    return f[size - 1], choice
