"""Matching decoders for the correlated dephasing channel.

Two matching graphs: "iid" treats the channel as independent single-qubit
flips with the exact per-qubit marginal; "correlation-aware" keeps the bare
p1 weights on grid edges and adds one diagonal edge per plaquette diagonal
with its effective rate.  Matching is exact: all-pairs Dijkstra distances,
then a subset DP over defects (with a boundary option per defect); above the
defect cap the trial is decoded exactly with a blossom matching instead of
being discarded, keeping the discard accounting at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import kernels
from .edgemap import build_edges, edge_pbars, effective_params
from .errors import CapacityError
from .lattice import (CodeLayout, MechanismSet, build_layout, class_bit,
                      logical_class, net_support, sample_mechanisms, syndrome,
                      LOGICAL, TRIVIAL)

MODE_IID = "iid"
MODE_CORRELATED = "correlation-aware"
DEFECT_CAP = 22
ML_MAX_DISTANCE = 3


def qubit_marginal(layout: CodeLayout, q: int, p1: float, p2: float) -> float:
    """Exact probability that qubit q suffers an odd number of flips."""
    m = sum(1 for pm in layout.pair_mechanisms if q in pm.qubits)
    return 0.5 * (1.0 - (1.0 - 2.0 * p1) * (1.0 - 2.0 * p2) ** m)


@dataclass
class MatchingGraph:
    layout: CodeLayout
    mode: str
    n_nodes: int  # ancillas + 1 boundary node (index n_nodes - 1)
    dist: np.ndarray  # all-pairs shortest path lengths
    pred: np.ndarray  # predecessor matrix from dijkstra
    edge_support: dict  # (u, v) -> qubit bitmask of the correction
    edges: list = field(repr=False, default_factory=list)  # (u, v, w, support)
    qubit_smask: list = field(repr=False, default_factory=list)
    gamma_mask: int = 0

    @property
    def boundary(self) -> int:
        return self.n_nodes - 1


def build_matching_graph(layout: CodeLayout, p1: float, p2: float,
                         mode: str) -> MatchingGraph:
    if mode not in (MODE_IID, MODE_CORRELATED):
        raise ValueError(f"mode must be {MODE_IID!r} or {MODE_CORRELATED!r}")
    if not (0.0 < p1 < 0.5 and 0.0 < p2 < 0.5):
        raise ValueError(f"need 0 < p1, p2 < 1/2, got {p1}, {p2}")
    edges_set = build_edges(layout)
    n_anc = layout.n_x_stabs
    boundary = n_anc

    def node(a) -> int:
        return boundary if a is None else int(a)

    raw: list[tuple[int, int, float, int]] = []
    if mode == MODE_IID:
        for q, ends in enumerate(edges_set.l1_endpoints):
            qm = qubit_marginal(layout, q, p1, p2)
            w = math.log((1.0 - qm) / qm)
            raw.append((node(ends[0]), node(ends[1]), w, 1 << q))
    else:
        params = effective_params(p1, p2)
        pb1, pb2, pb3 = edge_pbars(edges_set, params)
        for q, ends in enumerate(edges_set.l1_endpoints):
            w = math.log((1.0 - pb1[q]) / pb1[q])
            raw.append((node(ends[0]), node(ends[1]), w, 1 << q))
        for fam, pbs in ((edges_set.l2_edges, pb2), (edges_set.l3_edges, pb3)):
            for k, e in enumerate(fam):
                u, v = node(e.endpoints[0]), node(e.endpoints[1])
                if u == boundary and v == boundary:
                    continue
                pair = layout.pair_mechanisms[e.pair_ids[0]]
                sup = (1 << pair.qubits[0]) | (1 << pair.qubits[1])
                w = math.log((1.0 - pbs[k]) / pbs[k])
                raw.append((u, v, w, sup))

    # collapse parallel edges, keeping the lightest
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for u, v, w, sup in raw:
        key = (min(u, v), max(u, v))
        if key not in best or w < best[key][0]:
            best[key] = (w, sup)

    n_nodes = n_anc + 1
    rows, cols, data = [], [], []
    edge_support = {}
    edges = []
    for (u, v), (w, sup) in sorted(best.items()):
        rows += [u, v]
        cols += [v, u]
        data += [w, w]
        edge_support[(u, v)] = sup
        edge_support[(v, u)] = sup
        edges.append((u, v, w, sup))
    graph = csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
    dist, pred = dijkstra(graph, directed=False, return_predecessors=True)

    smask = []
    for q in range(layout.n_qubits):
        m = 0
        for s in np.flatnonzero(layout.x_incidence[:, q]):
            m |= 1 << int(s)
        smask.append(m)
    gamma = 0
    for q in layout.logical_x_support:
        gamma |= 1 << q

    return MatchingGraph(layout=layout, mode=mode, n_nodes=n_nodes, dist=dist,
                         pred=pred, edge_support=edge_support, edges=edges,
                         qubit_smask=smask, gamma_mask=gamma)


def _path_support(graph: MatchingGraph, u: int, v: int) -> int:
    """XOR of edge corrections along the shortest u-v path."""
    sup = 0
    cur = v
    while cur != u:
        prev = int(graph.pred[u, cur])
        if prev < 0:
            raise ValueError(f"no path between nodes {u} and {v}")
        sup ^= graph.edge_support[(prev, cur)]
        cur = prev
    return sup


def _blossom_pairing(w: np.ndarray, wb: np.ndarray):
    """Exact min-weight pairing via blossom matching on the twin graph."""
    n = len(wb)
    G = nx.Graph()
    for i in range(n):
        G.add_edge(("d", i), ("b", i), weight=float(wb[i]))
        for j in range(i + 1, n):
            G.add_edge(("d", i), ("d", j), weight=float(w[i, j]))
            G.add_edge(("b", i), ("b", j), weight=0.0)
    matching = nx.min_weight_matching(G)
    pairs, singles = [], []
    for a, b in matching:
        if a[0] == "d" and b[0] == "d":
            pairs.append((a[1], b[1]))
        elif a[0] == "d":
            singles.append(a[1])
        elif b[0] == "d":
            singles.append(b[1])
    return pairs, singles


def _dp_pairing(w: np.ndarray, wb: np.ndarray):
    _, choice = kernels.pairing_dp(w, wb)
    n = len(wb)
    mask = (1 << n) - 1
    pairs, singles = [], []
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = int(choice[mask])
        if j < 0:
            singles.append(i)
            mask &= ~(1 << i)
        else:
            pairs.append((i, j))
            mask &= ~((1 << i) | (1 << j))
    return pairs, singles


def _components(w: np.ndarray, wb: np.ndarray):
    """Connected components of the pruned defect graph.

    A pair with w(i,j) >= wb(i) + wb(j) can always be rerouted through the
    boundary at no extra cost, so pruning those edges and solving the
    remaining components independently is exact.
    """
    n = len(wb)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if w[i, j] < wb[i] + wb[j]:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[ra] = rb
    comps: dict[int, list[int]] = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(i)
    return list(comps.values())


def _optimal_pairing(graph: MatchingGraph, defects, defect_cap: int,
                     over_cap: str):
    """(pairs, singles, weight) of the exact minimum-weight pairing."""
    idx = np.array(defects)
    w = graph.dist[np.ix_(idx, idx)]
    wb = graph.dist[idx, graph.boundary]
    pairs: list[tuple[int, int]] = []
    singles: list[int] = []
    total = 0.0
    for comp in _components(w, wb):
        if len(comp) > defect_cap:
            if over_cap == "raise":
                raise CapacityError(
                    f"{len(comp)} coupled defects exceed the cap of {defect_cap}")
            sub_pairs, sub_singles = _blossom_pairing(
                w[np.ix_(comp, comp)], wb[comp])
        else:
            sub_pairs, sub_singles = _dp_pairing(w[np.ix_(comp, comp)], wb[comp])
        for a, b in sub_pairs:
            pairs.append((comp[a], comp[b]))
            total += float(w[comp[a], comp[b]])
        for a in sub_singles:
            singles.append(comp[a])
            total += float(wb[comp[a]])
    return pairs, singles, total


def decode(graph: MatchingGraph, defects, defect_cap: int = DEFECT_CAP,
           over_cap: str = "blossom") -> np.ndarray:
    """Exact minimum-weight matching correction for a defect set.

    Returns the correction as an array of qubit indices.  Above the defect
    cap (per coupled defect cluster), ``over_cap`` selects the exact blossom
    fallback (default) or a CapacityError signal for the discard-accounting
    path.
    """
    defects = [int(s) for s in defects]
    if not defects:
        return np.empty(0, dtype=np.int64)
    pairs, singles, _ = _optimal_pairing(graph, defects, defect_cap, over_cap)

    sup = 0
    for i, j in pairs:
        sup ^= _path_support(graph, defects[i], defects[j])
    for i in singles:
        sup ^= _path_support(graph, defects[i], graph.boundary)
    out = []
    q = 0
    while sup:
        if sup & 1:
            out.append(q)
        sup >>= 1
        q += 1
    return np.array(out, dtype=np.int64)


def matching_weight(graph: MatchingGraph, defects,
                    decompose: bool = True) -> float:
    """Total weight of the optimal pairing (diagnostic / oracle hook).

    With decompose=False the subset DP runs on the whole defect set in one
    piece, which serves as an independent check of the component splitting.
    """
    defects = [int(s) for s in defects]
    if not defects:
        return 0.0
    if decompose:
        _, _, total = _optimal_pairing(graph, defects, DEFECT_CAP, "blossom")
        return total
    idx = np.array(defects)
    w = graph.dist[np.ix_(idx, idx)]
    wb = graph.dist[idx, graph.boundary]
    best, _ = kernels.pairing_dp(w, wb)
    return float(best)


def ml_decode(layout: CodeLayout, defects, p1: float, p2: float) -> str:
    """Maximum-likelihood coset choice from the exact class sums (d <= 3)."""
    from .edgemap import class_sum_oracle

    if layout.distance > ML_MAX_DISTANCE:
        raise CapacityError(f"ml_decode limited to d <= {ML_MAX_DISTANCE}")
    p_triv, p_log = class_sum_oracle(layout, defects, p1, p2)
    return TRIVIAL if p_triv >= p_log else LOGICAL


@dataclass
class DecodeTrial:
    mechanisms: MechanismSet
    defects: np.ndarray
    correction: np.ndarray
    residual_class: str
    success: bool


def decode_trial(layout: CodeLayout, graph: MatchingGraph,
                 mechanisms: MechanismSet) -> DecodeTrial:
    """Run one decoding trial and verify the matching reproduces the syndrome."""
    defects = syndrome(layout, mechanisms)
    correction = decode(graph, defects)
    sup = net_support(layout, mechanisms)
    residual = sup.copy()
    residual[correction] ^= 1
    cls = logical_class(layout, residual)
    return DecodeTrial(mechanisms=mechanisms, defects=defects,
                       correction=correction, residual_class=cls,
                       success=cls == TRIVIAL)


@dataclass
class RateEstimate:
    d: int
    p: float
    mode: str
    trials: int
    failures: int
    discards: int
    rate: float
    ci_low: float
    ci_high: float


def wilson_interval(k: int, n: int, z: float = 1.96):
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, center - half), min(1.0, center + half)


def logical_error_rate(d: int, p: float, mode: str, trials: int, seed: int,
                       p1: float | None = None, p2: float | None = None,
                       defect_cap: int = DEFECT_CAP,
                       over_cap: str = "blossom",
                       batch: int = 4096) -> RateEstimate:
    """Monte Carlo logical failure rate of the matching decoder.

    Every correction is checked to reproduce its trial syndrome; failures are
    residuals in the non-trivial coset.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    layout = build_layout(d)
    p1 = p if p1 is None else p1
    p2 = p if p2 is None else p2
    graph = build_matching_graph(layout, p1, p2, mode)

    # per-mechanism syndrome masks and class bits
    smask = graph.qubit_smask
    mech_masks = list(smask)
    mech_cls = [1 if q in layout.logical_x_support else 0
                for q in range(layout.n_qubits)]
    for pm in layout.pair_mechanisms:
        mech_masks.append(smask[pm.qubits[0]] ^ smask[pm.qubits[1]])
        mech_cls.append(class_bit(layout, pm.qubits))
    mech_cls = np.array(mech_cls, dtype=np.uint8)
    n_mech = layout.n_qubits + layout.n_pairs

    failures = 0
    discards = 0
    done = 0
    b = 0
    while done < trials:
        nb = min(batch, trials - done)
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=int(seed), spawn_key=(d, b))))
        u = rng.random((nb, n_mech))
        fires = np.empty((nb, n_mech), dtype=bool)
        fires[:, :layout.n_qubits] = u[:, :layout.n_qubits] < p1
        fires[:, layout.n_qubits:] = u[:, layout.n_qubits:] < p2
        for t in range(nb):
            f = fires[t]
            smask_trial = 0
            for m in np.flatnonzero(f):
                smask_trial ^= int(mech_masks[m])
            cls_trial = int(mech_cls[f].sum()) & 1
            defects = []
            mm = smask_trial
            s = 0
            while mm:
                if mm & 1:
                    defects.append(s)
                mm >>= 1
                s += 1
            try:
                correction = decode(graph, defects, defect_cap=defect_cap,
                                    over_cap=over_cap)
            except CapacityError:
                discards += 1
                continue
            cmask = 0
            cls_corr = 0
            gamma = layout.logical_x_support
            for q in correction:
                cmask ^= smask[int(q)]
                if int(q) in gamma:
                    cls_corr ^= 1
            if cmask != smask_trial:
                raise AssertionError("correction does not reproduce the syndrome")
            if (cls_trial ^ cls_corr) == 1:
                failures += 1
        done += nb
        b += 1

    effective = trials - discards
    rate = failures / effective if effective else 0.0
    lo, hi = wilson_interval(failures, max(effective, 1))
    return RateEstimate(d=d, p=p, mode=mode, trials=trials, failures=failures,
                        discards=discards, rate=rate, ci_low=lo, ci_high=hi)


def estimate_decoder_threshold(rates_by_d: dict[int, tuple[np.ndarray, np.ndarray]]):
    """Threshold from pairwise crossings of log-rate curves (linear in log).

    ``rates_by_d``: d -> (p grid, logical rates).  Returns (p_th, spread,
    per-pair crossings).
    """
    sizes = sorted(rates_by_d)
    if len(sizes) < 2:
        raise ValueError("need at least two sizes")
    crossings = []
    for a in range(len(sizes)):
        for bi in range(a + 1, len(sizes)):
            pa, ra = rates_by_d[sizes[a]]
            pb, rb = rates_by_d[sizes[bi]]
            if not np.array_equal(pa, pb):
                raise ValueError("rate curves must share a p grid")
            ok = (ra > 0) & (rb > 0)
            pg = np.asarray(pa, dtype=float)[ok]
            diff = np.log(np.asarray(rb, dtype=float)[ok]) \
                - np.log(np.asarray(ra, dtype=float)[ok])
            sign = np.sign(diff)
            hits = np.flatnonzero(sign[:-1] * sign[1:] < 0)
            for i in hits[:1]:
                frac = diff[i] / (diff[i] - diff[i + 1])
                crossings.append(((sizes[a], sizes[bi]),
                                  float(pg[i] + frac * (pg[i + 1] - pg[i]))))
            if sign.size and np.any(sign == 0):
                i = int(np.flatnonzero(sign == 0)[0])
                crossings.append(((sizes[a], sizes[bi]), float(pg[i])))
    if not crossings:
        from .errors import UnbracketedThresholdError

        raise UnbracketedThresholdError("no log-rate crossings inside the p grid")
    vals = np.array([c for _, c in crossings])
    return float(vals.mean()), float(vals.max() - vals.min()), crossings
