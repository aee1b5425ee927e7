"""Oracle suite: the exact cross-checks behind the `validate` command.

Each check returns (name, passed, detail).  These are the fast exact
equivalences that pin down the construction: chain/coset equality, the
open-boundary statmech/code equivalence (which also selects the inter-cell
wiring), partition-function summation, and sampler detailed balance.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

from . import edgemap as em
from . import kernels, ptmc, rbim
from .lattice import build_layout, class_bit, net_support, sample_mechanisms, syndrome


def check_coset_equivalence(n_syndromes: int = 200, seed: int = 2024):
    """Chain-class sums equal mechanism coset sums on d <= 3 (rel < 1e-9)."""
    worst = 0.0
    rng = np.random.default_rng(seed)
    for d in (2, 3):
        layout = build_layout(d)
        edges = em.build_edges(layout)
        for (p1, p2) in ((0.03, 0.03), (0.05, 0.01), (0.01, 0.05)):
            mech = em.mechanism_class_table(layout, p1, p2)
            chain = em.chain_class_table(edges, em.effective_params(p1, p2))
            seen = 0
            while seen < n_syndromes:
                m = sample_mechanisms(layout, 0.1, 0.1, rng)
                idx = em.syndrome_to_index(layout, syndrome(layout, m))
                for c in (0, 1):
                    a, b = mech[idx, c], chain[idx, c]
                    worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
                seen += 1
    return "coset-equivalence", worst < 1e-9, f"max relative diff {worst:.3e}"


def check_brute_force_coset(seed: int = 5):
    """d=2 coset sums agree with direct enumeration over all mechanism sets."""
    layout = build_layout(2)
    p1, p2 = 0.07, 0.04
    table = em.mechanism_class_table(layout, p1, p2)
    nb = layout.n_x_stabs
    brute = np.zeros_like(table)
    n_mech = layout.n_qubits + layout.n_pairs
    for bits in itertools.product((0, 1), repeat=n_mech):
        singles = np.array(bits[:layout.n_qubits], dtype=bool)
        pairs = np.array(bits[layout.n_qubits:], dtype=bool)
        m = type("M", (), {})()
        from .lattice import MechanismSet

        m = MechanismSet(single_fires=singles, pair_fires=pairs)
        sup = net_support(layout, m)
        idx = em.syndrome_to_index(layout, syndrome(layout, sup))
        c = class_bit(layout, np.flatnonzero(sup))
        prob = (p1 ** singles.sum() * (1 - p1) ** (layout.n_qubits - singles.sum())
                * p2 ** pairs.sum() * (1 - p2) ** (layout.n_pairs - pairs.sum()))
        brute[idx, c] += prob
    worst = float(np.max(np.abs(brute - table) / np.maximum(brute, 1e-300)))
    return "coset-brute-force-d2", worst < 1e-12, f"max relative diff {worst:.3e}"


def check_statmech_equivalence(n_draws: int = 50, seed: int = 7,
                               p1: float = 0.08, p2: float = 0.06):
    """Z-ratio equals coset success probability; exactly one wiring passes."""
    layout = build_layout(2)
    edges = em.build_edges(layout)
    params = em.effective_params(p1, p2)
    table = em.mechanism_class_table(layout, p1, p2)
    rng = np.random.default_rng(seed)
    worst = {"primary": 0.0, "alternate": 0.0}
    for _ in range(n_draws):
        m = sample_mechanisms(layout, p1, p2, rng)
        dis = em.eta_from_indicators(em.map_to_edge_indicators(edges, m))
        sup = net_support(layout, m)
        idx = em.syndrome_to_index(layout, syndrome(layout, sup))
        c = class_bit(layout, np.flatnonzero(sup))
        p_success = table[idx, c] / (table[idx, 0] + table[idx, 1])
        for name, wiring in (("primary", rbim.WIRING_PRIMARY),
                             ("alternate", rbim.WIRING_ALTERNATE)):
            lz = rbim.open_log_z(edges, dis, params, params.beta_n, wiring)
            lzw = rbim.open_log_z(edges, rbim.flip_logical_line(edges, dis),
                                  params, params.beta_n, wiring)
            ratio = 1.0 / (1.0 + math.exp(lzw - lz))
            worst[name] = max(worst[name], abs(ratio - p_success))
    ok = worst["primary"] < 1e-8 and worst["alternate"] > 1e-3
    detail = (f"primary max |diff| {worst['primary']:.3e}, "
              f"alternate max |diff| {worst['alternate']:.3e} "
              f"(exactly one reading consistent)")
    return "statmech-code-equivalence", ok, detail


def check_partition_function(seed: int = 3):
    """logsumexp enumeration equals an independent ordered summation."""
    rng = np.random.default_rng(seed)
    params = em.effective_params(0.04, 0.04)
    worst = 0.0
    for L in (1, 2):
        bonds = rbim.BondDisorder.sample(L, params, rng)
        for beta in (0.0, 0.8, 2.0):
            lz = rbim.enumerate_partition_function(bonds, beta)
            en = rbim._energy_batch(rbim.all_states(L), bonds, rbim.WIRING_PRIMARY)
            en = np.sort(en)[::-1]  # ascending Boltzmann weight
            ref = math.log(math.fsum(math.exp(-beta * (e - en[-1])) for e in en)) \
                - beta * en[-1]
            worst = max(worst, abs(lz - ref))
            if beta == 0.0:
                worst = max(worst, abs(lz - L * L * math.log(8)))
    return "partition-function", worst < 1e-10, f"max |logZ diff| {worst:.3e}"


def boltzmann_chi_square(L: int, beta: float, n_sweeps: int, seed: int,
                         p: float = 0.04, thin: int | None = None):
    """Chi-square p-value of the sampled state histogram vs exact Boltzmann.

    Samples are thinned well past the slowest tunneling time so that the
    chi-square independence assumption holds.
    """
    params = em.effective_params(p, p)
    bonds = rbim.BondDisorder.sample(L, params, np.random.default_rng(seed))
    states = rbim.all_states(L)
    energies = rbim._energy_batch(states, bonds, rbim.WIRING_PRIMARY)
    w = np.exp(-beta * (energies - energies.min()))
    w /= w.sum()
    if thin is None:
        thin = max(20, int(50 * math.exp(2.0 * beta)))

    ops = ptmc._cell_ops_for(L, bonds)
    dis = {"eta_x": ptmc._flat(bonds.eta_x), "eta_y": ptmc._flat(bonds.eta_y),
           "eta2": ptmc._flat(bonds.eta2), "eta3": ptmc._flat(bonds.eta3)}
    acc, dh = kernels.cell_acceptance_tables(beta, bonds.j2, bonds.j3)
    state = np.zeros(L * L, dtype=np.uint8)
    counts = np.zeros(8 ** (L * L), dtype=np.int64)
    pow8 = (8 ** np.arange(L * L)).astype(np.int64)
    gen = np.random.default_rng(seed + 1)
    chunk = max(1, 200_000 // thin)  # records per kernel call
    records = n_sweeps // thin
    moves_per_record = thin * ops.n_moves
    done = 0
    while done < records:
        n = min(chunk, records - done)
        cells, masks, urand = ops.draw_moves(gen, n * thin)
        kernels.sweep_cell_hist(state, dis["eta_x"], dis["eta_y"], dis["eta2"],
                                dis["eta3"], ops.right, ops.left, ops.up,
                                ops.down, acc, dh, cells, masks, urand,
                                n, moves_per_record, pow8, counts)
        done += n
    # merge low-expectation bins for a valid chi-square
    expected = w * counts.sum()
    order = np.argsort(expected)
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += counts[i]
        acc_e += expected[i]
        if acc_e >= 10.0:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_m[-1] += acc_o
        exp_m[-1] += acc_e
    obs_m = np.array(obs_m)
    exp_m = np.array(exp_m) * (np.sum(obs_m) / np.sum(exp_m))
    chi2, pval = stats.chisquare(obs_m, exp_m)
    return float(pval)


def pt_product_chi_square(n_passes: int = 200_000, seed: int = 9,
                          betas=(0.6, 1.4), p: float = 0.05):
    """Joint (state@T1, state@T2) histogram of a 1-cell PT chain vs the
    product of the two exact Boltzmann distributions."""
    params = em.effective_params(p, p)
    bonds = rbim.BondDisorder.sample(1, params, np.random.default_rng(seed))
    states = rbim.all_states(1)
    energies = rbim._energy_batch(states, bonds, rbim.WIRING_PRIMARY)
    probs = []
    for beta in betas:
        w = np.exp(-beta * (energies - energies.min()))
        probs.append(w / w.sum())
    joint = np.outer(probs[0], probs[1])

    ops = ptmc._cell_ops_for(1, bonds)
    dis = {"eta_x": ptmc._flat(bonds.eta_x), "eta_y": ptmc._flat(bonds.eta_y),
           "eta2": ptmc._flat(bonds.eta2), "eta3": ptmc._flat(bonds.eta3)}
    temps = [1.0 / b for b in sorted(betas, reverse=True)]
    ens = ptmc.Ensemble(ops=ops, disorder=dis, temperatures=np.array(temps),
                        states=np.zeros((2, 1), dtype=np.uint8),
                        replica_ids=np.arange(2), energies=np.zeros(2))
    ens.refresh_energies()
    accs = np.stack([kernels.cell_acceptance_tables(1.0 / t, bonds.j2, bonds.j3)[0]
                     for t in temps])
    dhs = np.stack([kernels.cell_acceptance_tables(1.0 / t, bonds.j2, bonds.j3)[1]
                    for t in temps])
    gen = np.random.default_rng(seed + 1)
    counts = np.zeros((8, 8), dtype=np.int64)
    # temps is ascending, so slot 0 holds the colder chain
    i_cold = 0 if betas[0] >= betas[1] else 1  # index into `probs` (betas order)
    sweeps_between = 10
    record_every = 20  # exchange passes between records, to decorrelate
    for it in range(n_passes):
        rands = ops.draw_moves_stack([gen, gen], sweeps_between)
        ops.sweep_stack(ens.states, ens.replica_ids, dis, accs, dhs, rands,
                        0, sweeps_between, ens.energies)
        ptmc.replica_exchange(ens, gen)
        if it % record_every == 0:
            counts[ens.states[0, 0], ens.states[1, 0]] += 1
    p_cold, p_hot = probs[i_cold], probs[1 - i_cold]
    expected = np.outer(p_cold, p_hot) * counts.sum()
    obs = counts.reshape(-1).astype(float)
    exp = expected.reshape(-1)
    order = np.argsort(exp)
    obs_m, exp_m = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += obs[i]
        acc_e += exp[i]
        if acc_e >= 10.0:
            obs_m.append(acc_o)
            exp_m.append(acc_e)
            acc_o = acc_e = 0.0
    obs_m[-1] += acc_o
    exp_m[-1] += acc_e
    obs_m = np.array(obs_m)
    exp_m = np.array(exp_m) * (obs_m.sum() / np.sum(exp_m))
    chi2, pval = stats.chisquare(obs_m, exp_m)
    return float(pval)


def check_detailed_balance(n_sweeps: int = 1_000_000, seed: int = 21):
    pvals = [boltzmann_chi_square(1, beta, n_sweeps, seed) for beta in (0.5, 1.0, 2.0)]
    ok = all(p > 0.01 for p in pvals)
    return "detailed-balance-1cell", ok, f"chi-square p-values {np.round(pvals, 4).tolist()}"


def check_pt_product(seed: int = 31):
    pval = pt_product_chi_square(n_passes=100_000, seed=seed)
    return "pt-product-distribution", pval > 0.01, f"chi-square p-value {pval:.4f}"


def run_all(fast: bool = True):
    checks = [
        check_coset_equivalence(),
        check_brute_force_coset(),
        check_statmech_equivalence(),
        check_partition_function(),
        check_detailed_balance(n_sweeps=1_000_000 if fast else 10_000_000),
        check_pt_product(),
    ]
    return checks
