"""Planar surface-code geometry and the correlated dephasing channel.

Coordinates are doubled integers so every object sits on the integer grid:
horizontal data qubits at (odd, even), vertical data qubits at (even, odd),
vertex (X) ancillas at (even, even) with 2 <= x <= 2(d-1), plaquette centers
at (odd, odd).  Pair mechanisms are the nearest-neighbor data-qubit pairs at
offsets (-1,+1) ("diagonal", kind 2) and (+1,+1) ("anti-diagonal", kind 3);
each such pair shares exactly one plaquette.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRIVIAL = "trivial"
LOGICAL = "logical"


@dataclass(frozen=True)
class PairMechanism:
    """One two-qubit correlated error mechanism."""

    qubits: tuple[int, int]
    kind: int  # 2 = diagonal, 3 = anti-diagonal
    plaquette: int  # index of the shared Z stabilizer


@dataclass(frozen=True)
class CodeLayout:
    distance: int
    qubit_coords: np.ndarray  # (n_qubits, 2) doubled integer coordinates
    x_stabilizers: tuple[tuple[int, ...], ...]
    z_stabilizers: tuple[tuple[int, ...], ...]
    x_stab_coords: np.ndarray  # (n_x, 2) vertex positions
    z_stab_coords: np.ndarray  # (n_z, 2) plaquette centers
    x_stab_boundary: np.ndarray  # True for degree-3 vertex stabilizers
    z_stab_boundary: np.ndarray  # True for degree-3 plaquettes
    logical_x_support: frozenset[int]
    logical_z_support: frozenset[int]
    pair_mechanisms: tuple[PairMechanism, ...]
    qubit_index: dict[tuple[int, int], int] = field(repr=False)
    x_incidence: np.ndarray = field(repr=False)  # (n_x, n_qubits) uint8

    @property
    def n_qubits(self) -> int:
        return self.qubit_coords.shape[0]

    @property
    def n_x_stabs(self) -> int:
        return len(self.x_stabilizers)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_mechanisms)


@dataclass(frozen=True)
class MechanismSet:
    """Which single and pair mechanisms fired in one noise sample."""

    single_fires: np.ndarray  # bool, (n_qubits,)
    pair_fires: np.ndarray  # bool, (n_pairs,)


def build_layout(d: int) -> CodeLayout:
    """Build the unrotated planar layout of distance d (d >= 2)."""
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ValueError(f"distance must be an integer >= 2, got {d!r}")
    d = int(d)

    coords: list[tuple[int, int]] = []
    for j in range(d):  # horizontal qubits, row by row
        for i in range(d):
            coords.append((2 * i + 1, 2 * j))
    for j in range(d - 1):  # vertical qubits
        for i in range(1, d):
            coords.append((2 * i, 2 * j + 1))
    qubit_index = {c: k for k, c in enumerate(coords)}
    qubit_coords = np.array(coords, dtype=np.int32)

    x_stabs: list[tuple[int, ...]] = []
    x_coords: list[tuple[int, int]] = []
    for j in range(d):
        for i in range(1, d):
            v = (2 * i, 2 * j)
            sup = [qubit_index[(v[0] - 1, v[1])], qubit_index[(v[0] + 1, v[1])]]
            for dy in (-1, 1):
                q = (v[0], v[1] + dy)
                if q in qubit_index:
                    sup.append(qubit_index[q])
            x_stabs.append(tuple(sorted(sup)))
            x_coords.append(v)

    z_stabs: list[tuple[int, ...]] = []
    z_coords: list[tuple[int, int]] = []
    for j in range(d - 1):
        for i in range(d):
            c = (2 * i + 1, 2 * j + 1)
            sup = [qubit_index[(c[0], c[1] - 1)], qubit_index[(c[0], c[1] + 1)]]
            for dx in (-1, 1):
                q = (c[0] + dx, c[1])
                if q in qubit_index:
                    sup.append(qubit_index[q])
            z_stabs.append(tuple(sorted(sup)))
            z_coords.append(c)

    plaq_index = {c: k for k, c in enumerate(z_coords)}

    pairs: list[PairMechanism] = []
    for (x, y), q in sorted(qubit_index.items(), key=lambda kv: kv[1]):
        for dx, kind in ((-1, 2), (1, 3)):
            other = (x + dx, y + 1)
            oq = qubit_index.get(other)
            if oq is None:
                continue
            # shared plaquette: the one Z stabilizer containing both qubits
            shared = [
                plaq_index[c]
                for c in plaq_index
                if q in z_stabs[plaq_index[c]] and oq in z_stabs[plaq_index[c]]
            ]
            assert len(shared) == 1
            pairs.append(PairMechanism(qubits=(q, oq), kind=kind, plaquette=shared[0]))

    logical_x = frozenset(qubit_index[(1, 2 * j)] for j in range(d))
    logical_z = frozenset(qubit_index[(2 * i + 1, 0)] for i in range(d))

    incidence = np.zeros((len(x_stabs), len(coords)), dtype=np.uint8)
    for s, sup in enumerate(x_stabs):
        incidence[s, list(sup)] = 1

    layout = CodeLayout(
        distance=d,
        qubit_coords=qubit_coords,
        x_stabilizers=tuple(x_stabs),
        z_stabilizers=tuple(z_stabs),
        x_stab_coords=np.array(x_coords, dtype=np.int32),
        z_stab_coords=np.array(z_coords, dtype=np.int32),
        x_stab_boundary=np.array([len(s) == 3 for s in x_stabs]),
        z_stab_boundary=np.array([len(s) == 3 for s in z_stabs]),
        logical_x_support=logical_x,
        logical_z_support=logical_z,
        pair_mechanisms=tuple(pairs),
        qubit_index=qubit_index,
        x_incidence=incidence,
    )
    for arr in (layout.qubit_coords, layout.x_stab_coords, layout.z_stab_coords,
                layout.x_stab_boundary, layout.z_stab_boundary, layout.x_incidence):
        arr.flags.writeable = False
    return layout


def sample_mechanisms(layout: CodeLayout, p1: float, p2: float, rng) -> MechanismSet:
    """Draw one noise sample: each single fires with p1, each pair with p2.

    ``rng`` is an integer seed or a numpy Generator.
    """
    if not (0.0 <= p1 <= 1.0 and 0.0 <= p2 <= 1.0):
        raise ValueError(f"probabilities must lie in [0, 1], got p1={p1}, p2={p2}")
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    singles = gen.random(layout.n_qubits) < p1
    pairs = gen.random(layout.n_pairs) < p2
    return MechanismSet(single_fires=singles, pair_fires=pairs)


def net_support(layout: CodeLayout, mechanisms: MechanismSet) -> np.ndarray:
    """Net Z-support (mod 2) of a mechanism set, as a uint8 vector over qubits."""
    sup = mechanisms.single_fires.astype(np.uint8).copy()
    for k, pm in enumerate(layout.pair_mechanisms):
        if mechanisms.pair_fires[k]:
            sup[pm.qubits[0]] ^= 1
            sup[pm.qubits[1]] ^= 1
    return sup


def syndrome(layout: CodeLayout, mechanisms) -> np.ndarray:
    """Indices of X stabilizers with odd overlap with the net Z-support."""
    if isinstance(mechanisms, MechanismSet):
        sup = net_support(layout, mechanisms)
    else:
        sup = np.asarray(mechanisms, dtype=np.uint8)
    defects = (layout.x_incidence @ sup) & 1
    return np.flatnonzero(defects)


def logical_class(layout: CodeLayout, z_support) -> str:
    """Coset of a syndrome-free Z-support: TRIVIAL (stabilizer) or LOGICAL."""
    sup = np.asarray(z_support, dtype=np.uint8)
    defects = syndrome(layout, sup)
    if defects.size:
        raise ValueError(f"support has non-empty syndrome (defects {defects.tolist()})")
    overlap = int(sup[sorted(layout.logical_x_support)].sum()) & 1
    return LOGICAL if overlap else TRIVIAL


def class_bit(layout: CodeLayout, qubits) -> int:
    """Overlap parity of a qubit set with the logical-X column (0 or 1)."""
    gamma = layout.logical_x_support
    return sum(1 for q in qubits if q in gamma) & 1


def layout_text(layout: CodeLayout) -> str:
    """Deterministic text description for golden-file tests."""
    lines = [f"planar surface code, distance {layout.distance}", "qubits:"]
    for k, (x, y) in enumerate(layout.qubit_coords):
        lines.append(f"  q{k} ({x},{y})")
    lines.append("x_stabilizers:")
    for s, sup in enumerate(layout.x_stabilizers):
        x, y = layout.x_stab_coords[s]
        lines.append(f"  v{s} ({x},{y}) qubits={list(sup)}")
    lines.append("z_stabilizers:")
    for s, sup in enumerate(layout.z_stabilizers):
        x, y = layout.z_stab_coords[s]
        lines.append(f"  p{s} ({x},{y}) qubits={list(sup)}")
    lines.append("pair_mechanisms:")
    for k, pm in enumerate(layout.pair_mechanisms):
        lines.append(
            f"  m{k} kind={pm.kind} qubits={list(pm.qubits)} plaquette={pm.plaquette}"
        )
    lines.append(f"logical_x_support: {sorted(layout.logical_x_support)}")
    lines.append(f"logical_z_support: {sorted(layout.logical_z_support)}")
    return "\n".join(lines) + "\n"
