"""Error-edge map: mechanisms -> independent indicators on three edge families.

The ancilla graph has one l1 edge per data qubit (grid segments between
nearest vertex ancillas), one diagonal l2 edge per plaquette (upper-left to
lower-right) and one anti-diagonal l3 edge per plaquette.  A bulk l2/l3 edge
owns the two pair mechanisms whose defect endpoints coincide with the edge
endpoints; firing both pairs multiplies to the plaquette stabilizer, so the
edge indicator is the XOR of its owned pairs and the effective edge rates are
pbar1 = p1 and pbar2 = pbar3 = 2 p2 (1 - p2) in the bulk.  Boundary edges own
a single pair and keep the bare rate p2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, InfiniteCouplingError, UnrealizableSyndromeError
from .lattice import CodeLayout, MechanismSet, build_layout

ORACLE_MAX_DISTANCE = 3

EDGE_DISORDER_FORMAT = "sqoct-edge-disorder v1"


@dataclass(frozen=True)
class DiagEdge:
    """One l2 or l3 edge: endpoint ancilla indices (None = virtual) and owned pairs."""

    plaquette: int
    endpoints: tuple[int | None, int | None]
    pair_ids: tuple[int, ...]
    crosses_logical: bool


@dataclass(frozen=True)
class EdgeSet:
    layout: CodeLayout
    # l1 edge k corresponds to data qubit k
    l1_endpoints: tuple[tuple[int | None, int | None], ...]
    l1_crosses_logical: np.ndarray  # bool per qubit
    l2_edges: tuple[DiagEdge, ...]
    l3_edges: tuple[DiagEdge, ...]

    @property
    def n_l1(self) -> int:
        return len(self.l1_endpoints)


@dataclass(frozen=True)
class EdgeIndicators:
    """Binary indicators n(l) over the three edge families."""

    n1: np.ndarray  # uint8 per qubit
    n2: np.ndarray  # uint8 per plaquette
    n3: np.ndarray  # uint8 per plaquette


@dataclass(frozen=True)
class EdgeDisorder:
    """Quenched signs eta = 1 - 2n on every edge of a planar instance."""

    eta1: np.ndarray  # int8 per qubit
    eta2: np.ndarray  # int8 per plaquette
    eta3: np.ndarray  # int8 per plaquette


@dataclass(frozen=True)
class EffectiveParams:
    p1: float
    p2: float
    p3: float
    pbar1: float
    pbar2: float
    pbar3: float
    j1: float
    j2: float
    j3: float
    j2p: float
    j3p: float
    beta_n: float


def effective_params(p1: float, p2: float) -> EffectiveParams:
    """Effective edge rates, log-odds couplings and the Nishimori temperature.

    pbar1 = p1, pbar2 = pbar3 = 2 p2 (1 - p2); J_i = ln((1-pbar_i)/pbar_i);
    reduced couplings J2' = J2/J1, J3' = J3/J1; beta_N = J1 / 2.
    """
    p3 = p2
    pbar1, pbar2 = float(p1), 2.0 * p2 * (1.0 - p2)
    for name, pb in (("pbar1", pbar1), ("pbar2", pbar2)):
        if pb in (0.0, 1.0):
            raise InfiniteCouplingError(
                f"{name} = {pb}: coupling diverges, use the degenerate (p2 -> 0) path"
            )
    if not (0.0 < p1 < 0.5 and 0.0 < p2 < 0.5):
        raise ValueError(f"need 0 < p1, p2 < 1/2 for positive couplings, got {p1}, {p2}")
    j1 = math.log((1.0 - pbar1) / pbar1)
    j2 = math.log((1.0 - pbar2) / pbar2)
    return EffectiveParams(
        p1=float(p1), p2=float(p2), p3=p3,
        pbar1=pbar1, pbar2=pbar2, pbar3=pbar2,
        j1=j1, j2=j2, j3=j2, j2p=j2 / j1, j3p=j2 / j1,
        beta_n=0.5 * j1,
    )


def _ancilla_lookup(layout: CodeLayout) -> dict[tuple[int, int], int]:
    return {tuple(c): k for k, c in enumerate(layout.x_stab_coords)}


def build_edges(layout: CodeLayout) -> EdgeSet:
    """Construct the three edge families of the ancilla graph."""
    anc = _ancilla_lookup(layout)

    def node(c: tuple[int, int]) -> int | None:
        return anc.get(c)  # None = virtual boundary ancilla

    l1_endpoints = []
    l1_cross = np.zeros(layout.n_qubits, dtype=bool)
    for k, (x, y) in enumerate(layout.qubit_coords):
        if x % 2 == 1:  # horizontal qubit: endpoints left/right
            ends = (node((x - 1, y)), node((x + 1, y)))
            l1_cross[k] = x == 1
        else:  # vertical qubit: endpoints below/above
            ends = (node((x, y - 1)), node((x, y + 1)))
        l1_endpoints.append(ends)

    by_plaq: dict[tuple[int, int], list[int]] = {}
    for pid, pm in enumerate(layout.pair_mechanisms):
        by_plaq.setdefault((pm.plaquette, pm.kind), []).append(pid)

    l2, l3 = [], []
    for p, (cx, cy) in enumerate(layout.z_stab_coords):
        crosses = cx == 1
        l2.append(DiagEdge(
            plaquette=p,
            endpoints=(node((cx - 1, cy + 1)), node((cx + 1, cy - 1))),
            pair_ids=tuple(by_plaq.get((p, 2), ())),
            crosses_logical=crosses,
        ))
        l3.append(DiagEdge(
            plaquette=p,
            endpoints=(node((cx - 1, cy - 1)), node((cx + 1, cy + 1))),
            pair_ids=tuple(by_plaq.get((p, 3), ())),
            crosses_logical=crosses,
        ))
    l1_cross.flags.writeable = False
    return EdgeSet(
        layout=layout,
        l1_endpoints=tuple(l1_endpoints),
        l1_crosses_logical=l1_cross,
        l2_edges=tuple(l2),
        l3_edges=tuple(l3),
    )


def map_to_edge_indicators(edges: EdgeSet, mechanisms: MechanismSet) -> EdgeIndicators:
    """n(l1^k) = single fire at qubit k; n(l2/l3^k) = XOR of the owned pair fires."""
    n1 = mechanisms.single_fires.astype(np.uint8)
    n2 = np.zeros(len(edges.l2_edges), dtype=np.uint8)
    n3 = np.zeros(len(edges.l3_edges), dtype=np.uint8)
    for out, family in ((n2, edges.l2_edges), (n3, edges.l3_edges)):
        for k, e in enumerate(family):
            v = 0
            for pid in e.pair_ids:
                v ^= int(mechanisms.pair_fires[pid])
            out[k] = v
    return EdgeIndicators(n1=n1, n2=n2, n3=n3)


def edge_pbars(edges: EdgeSet, params: EffectiveParams):
    """Per-edge effective rates; boundary l2/l3 edges own one pair and keep p2."""
    pb1 = np.full(edges.n_l1, params.pbar1)
    pb2 = np.array([params.pbar2 if len(e.pair_ids) == 2 else params.p2
                    for e in edges.l2_edges])
    pb3 = np.array([params.pbar3 if len(e.pair_ids) == 2 else params.p3
                    for e in edges.l3_edges])
    return pb1, pb2, pb3


def chain_log_weight(edges: EdgeSet, indicators: EdgeIndicators,
                     params: EffectiveParams) -> float:
    """log of the (unnormalized) chain weight: sum of n(l) * ln(pbar/(1-pbar))."""
    pb1, pb2, pb3 = edge_pbars(edges, params)
    total = 0.0
    for n, pb in ((indicators.n1, pb1), (indicators.n2, pb2), (indicators.n3, pb3)):
        total += float(np.sum(n * np.log(pb / (1.0 - pb))))
    return total


def eta_from_indicators(ind: EdgeIndicators) -> EdgeDisorder:
    """eta = 1 - 2n on every edge."""
    return EdgeDisorder(
        eta1=(1 - 2 * ind.n1.astype(np.int8)).astype(np.int8),
        eta2=(1 - 2 * ind.n2.astype(np.int8)).astype(np.int8),
        eta3=(1 - 2 * ind.n3.astype(np.int8)).astype(np.int8),
    )


def sample_bond_disorder(edges: EdgeSet, params: EffectiveParams, rng) -> EdgeDisorder:
    """Draw eta(l) = -1 independently with the per-edge effective rate."""
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    pb1, pb2, pb3 = edge_pbars(edges, params)
    draw = lambda pb: np.where(gen.random(pb.shape) < pb, -1, 1).astype(np.int8)
    return EdgeDisorder(eta1=draw(pb1), eta2=draw(pb2), eta3=draw(pb3))


def save_edge_disorder(path, dis: EdgeDisorder) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {EDGE_DISORDER_FORMAT}\n")
        for fam, arr in (("l1", dis.eta1), ("l2", dis.eta2), ("l3", dis.eta3)):
            for k, e in enumerate(arr):
                fh.write(f"{fam} {k} {int(e)}\n")


def load_edge_disorder(path) -> EdgeDisorder:
    rows = {"l1": {}, "l2": {}, "l3": {}}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != f"# {EDGE_DISORDER_FORMAT}":
            raise ValueError(f"unrecognized edge-disorder header: {header!r}")
        for line in fh:
            fam, k, e = line.split()
            rows[fam][int(k)] = int(e)
    to_arr = lambda d: np.array([d[k] for k in range(len(d))], dtype=np.int8)
    return EdgeDisorder(eta1=to_arr(rows["l1"]), eta2=to_arr(rows["l2"]),
                        eta3=to_arr(rows["l3"]))


# ---------------------------------------------------------------------------
# Exact class sums.  Both sides of the chain/coset equivalence are computed by
# iterated XOR convolution of independent two-point factors over the joint
# (syndrome bits, logical-class bit) space; all arithmetic is positive, so the
# sums are exact to machine precision.
# ---------------------------------------------------------------------------

def _check_oracle_capacity(layout: CodeLayout) -> None:
    if layout.distance > ORACLE_MAX_DISTANCE:
        raise CapacityError(
            f"exact class sums limited to d <= {ORACLE_MAX_DISTANCE}, "
            f"got d = {layout.distance}"
        )


def _convolve(images: np.ndarray, probs: np.ndarray, n_bits: int) -> np.ndarray:
    """Distribution of the XOR of independent Bernoulli image vectors."""
    size = 1 << n_bits
    table = np.zeros(size)
    table[0] = 1.0
    idx = np.arange(size)
    for img, p in zip(images, probs):
        table = (1.0 - p) * table + p * table[idx ^ int(img)]
    return table


def _mechanism_images(layout: CodeLayout) -> tuple[np.ndarray, int]:
    """(syndrome, class)-space image of every mechanism, singles then pairs."""
    nb = layout.n_x_stabs
    gamma = layout.logical_x_support
    images = []
    for q in range(layout.n_qubits):
        img = 0
        for s in np.flatnonzero(layout.x_incidence[:, q]):
            img |= 1 << int(s)
        if q in gamma:
            img |= 1 << nb
        images.append(img)
    for pm in layout.pair_mechanisms:
        img = 0
        for q in pm.qubits:
            img ^= images[q] & ((1 << nb) - 1)
            img ^= (1 << nb) if q in gamma else 0
        images.append(img)
    return np.array(images, dtype=np.int64), nb


def mechanism_class_table(layout: CodeLayout, p1: float, p2: float) -> np.ndarray:
    """P(syndrome = S, class = c) summed over all mechanism sets; shape (2^n, 2)."""
    _check_oracle_capacity(layout)
    images, nb = _mechanism_images(layout)
    probs = np.concatenate([
        np.full(layout.n_qubits, p1),
        np.full(layout.n_pairs, p2),
    ])
    table = _convolve(images, probs, nb + 1)
    return table.reshape(2, 1 << nb).T  # [S, c]


def chain_class_table(edges: EdgeSet, params: EffectiveParams) -> np.ndarray:
    """Chain-weight sums per (syndrome, class), normalized as probabilities.

    Built purely from edge geometry: defect bits from real edge endpoints,
    class bit from whether the edge crosses the logical-X column.
    """
    layout = edges.layout
    _check_oracle_capacity(layout)
    nb = layout.n_x_stabs
    images, probs = [], []

    def add(endpoints, crosses, pbar):
        img = 0
        for a in endpoints:
            if a is not None:
                img ^= 1 << int(a)
        if crosses:
            img |= 1 << nb
        images.append(img)
        probs.append(pbar)

    pb1, pb2, pb3 = edge_pbars(edges, params)
    for k, ends in enumerate(edges.l1_endpoints):
        add(ends, bool(edges.l1_crosses_logical[k]), pb1[k])
    for fam, pbs in ((edges.l2_edges, pb2), (edges.l3_edges, pb3)):
        for k, e in enumerate(fam):
            add(e.endpoints, e.crosses_logical, pbs[k])
    table = _convolve(np.array(images, dtype=np.int64), np.array(probs), nb + 1)
    return table.reshape(2, 1 << nb).T


@lru_cache(maxsize=32)
def _cached_mechanism_table(d: int, p1: float, p2: float):
    layout = build_layout(d)
    table = mechanism_class_table(layout, p1, p2)
    table.flags.writeable = False
    return layout, table


def syndrome_to_index(layout: CodeLayout, defects) -> int:
    idx = 0
    for s in defects:
        s = int(s)
        if not 0 <= s < layout.n_x_stabs:
            raise ValueError(f"defect index {s} out of range")
        idx |= 1 << s
    return idx


def class_sum_oracle(layout: CodeLayout, defects, p1: float, p2: float):
    """Exact (P_trivial, P_logical) coset sums for one syndrome.

    ``defects`` is an iterable of X-stabilizer indices.  The two values sum to
    the total probability of observing the syndrome.
    """
    _check_oracle_capacity(layout)
    _, table = _cached_mechanism_table(layout.distance, float(p1), float(p2))
    row = table[syndrome_to_index(layout, defects)]
    p_triv, p_log = float(row[0]), float(row[1])
    if p_triv + p_log == 0.0:
        raise UnrealizableSyndromeError("no mechanism set produces this syndrome")
    return p_triv, p_log


def support_distribution(layout: CodeLayout, p1: float, p2: float) -> np.ndarray:
    """Exact distribution of the net Z-support over all 2^n_qubits patterns.

    Independent enumeration route used to cross-check the class tables.
    """
    _check_oracle_capacity(layout)
    nq = layout.n_qubits
    images, probs = [], []
    for q in range(nq):
        images.append(1 << q)
        probs.append(p1)
    for pm in layout.pair_mechanisms:
        images.append((1 << pm.qubits[0]) | (1 << pm.qubits[1]))
        probs.append(p2)
    return _convolve(np.array(images, dtype=np.int64), np.array(probs), nq)
