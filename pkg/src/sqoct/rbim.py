"""Constrained square-octagonal random-bond Ising model.

Each cell holds four spins s1..s4 with the product constraint
s1*s2*s3*s4 = +1, stored as a 3-bit code (bits = sign bits of s1..s3,
s4 = s1*s2*s3).  On the torus the Hamiltonian is

    H = - sum_c [ eta_x(c) * s_ax(c) s_bx(c+x)
                + eta_y(c) * s_ay(c) s_by(c+y)
                + j2 * eta2(c) * s1(c) s2(c)
                + j3 * eta3(c) * s1(c) s4(c) ]

with inter-cell slot labels (ax, bx), (ay, by) given by the wiring.  Under
the constraint s1 s2 = s3 s4 and s1 s4 = s2 s3, so each diagonal edge is
counted exactly once, matching the chain-weight normalization (each edge of
the ancilla graph contributes exp(J_i eta u / 2) at beta = J1/2).

WIRING_PRIMARY couples s4->s2 across x-bonds and s1->s3 across y-bonds,
i.e. spins sit on the triangles (s1, s2, s3, s4) = (N, W, S, E) of each
cell.  WIRING_ALTERNATE is the competing label reading (s3->s2 across x,
s1->s4 across y); the open-boundary code-equivalence oracle selects the
primary one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .edgemap import EdgeDisorder, EdgeSet, EffectiveParams
from .errors import CapacityError

# state code -> spin values; bit k of the code is the sign bit of s_{k+1}
_codes = np.arange(8)
_s1 = np.where(_codes & 1, -1, 1).astype(np.int8)
_s2 = np.where(_codes & 2, -1, 1).astype(np.int8)
_s3 = np.where(_codes & 4, -1, 1).astype(np.int8)
SPIN_TABLE = np.stack([_s1, _s2, _s3, (_s1 * _s2 * _s3).astype(np.int8)], axis=1)
SPIN_TABLE.flags.writeable = False

# the six constraint-preserving pair flips: choice -> XOR mask on the code
# pairs: (s1,s2) (s1,s3) (s2,s3) (s1,s4) (s2,s4) (s3,s4)
PAIR_MASKS = np.array([0b011, 0b101, 0b110, 0b001, 0b010, 0b100], dtype=np.uint8)
PAIR_MASKS.flags.writeable = False

WIRING_PRIMARY = ((4, 2), (1, 3))
WIRING_ALTERNATE = ((3, 2), (1, 4))

ENUM_MAX_L = 2
OPEN_ENUM_MAX_D = 3


def encode_cell(s1: int, s2: int, s3: int, s4: int) -> int:
    if s1 * s2 * s3 * s4 != 1:
        raise ValueError("cell spins violate the product constraint")
    return (s1 < 0) | ((s2 < 0) << 1) | ((s3 < 0) << 2)


@dataclass
class CellSpinLattice:
    """L x L cells of four constrained spins, periodic in both directions."""

    states: np.ndarray  # uint8[L, L], values 0..7

    @property
    def L(self) -> int:
        return self.states.shape[0]

    @classmethod
    def all_up(cls, L: int) -> "CellSpinLattice":
        return cls(states=np.zeros((L, L), dtype=np.uint8))

    @classmethod
    def random(cls, L: int, rng) -> "CellSpinLattice":
        gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return cls(states=gen.integers(0, 8, size=(L, L), dtype=np.uint8))

    def spins(self):
        """Four int8[L, L] arrays (s1, s2, s3, s4)."""
        t = SPIN_TABLE[self.states]
        return t[..., 0], t[..., 1], t[..., 2], t[..., 3]

    def copy(self) -> "CellSpinLattice":
        return CellSpinLattice(states=self.states.copy())


@dataclass
class BondDisorder:
    """Quenched torus disorder: one sign per l1 bond and per diagonal edge."""

    eta_x: np.ndarray  # int8[L, L], bond from cell (ix, iy) to (ix+1, iy)
    eta_y: np.ndarray  # int8[L, L], bond from cell (ix, iy) to (ix, iy+1)
    eta2: np.ndarray  # int8[L, L]
    eta3: np.ndarray  # int8[L, L]
    j2: float
    j3: float

    @property
    def L(self) -> int:
        return self.eta_x.shape[0]

    @classmethod
    def ferromagnetic(cls, L: int, j2: float, j3: float) -> "BondDisorder":
        one = lambda: np.ones((L, L), dtype=np.int8)
        return cls(eta_x=one(), eta_y=one(), eta2=one(), eta3=one(), j2=j2, j3=j3)

    @classmethod
    def sample(cls, L: int, params: EffectiveParams, rng) -> "BondDisorder":
        """eta = -1 with the effective rate of its family (all edges bulk on a torus)."""
        gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        draw = lambda p: np.where(gen.random((L, L)) < p, -1, 1).astype(np.int8)
        return cls(eta_x=draw(params.pbar1), eta_y=draw(params.pbar1),
                   eta2=draw(params.pbar2), eta3=draw(params.pbar3),
                   j2=params.j2p, j3=params.j3p)

    def copy(self) -> "BondDisorder":
        return BondDisorder(eta_x=self.eta_x.copy(), eta_y=self.eta_y.copy(),
                            eta2=self.eta2.copy(), eta3=self.eta3.copy(),
                            j2=self.j2, j3=self.j3)


def _slot(spins, label):
    return spins[label - 1]


def energy(lattice: CellSpinLattice, bonds: BondDisorder,
           wiring=WIRING_PRIMARY) -> float:
    if lattice.L != bonds.L:
        raise ValueError(f"lattice L={lattice.L} does not match bonds L={bonds.L}")
    spins = lattice.spins()
    (ax, bx), (ay, by) = wiring
    sx = _slot(spins, ax) * np.roll(_slot(spins, bx), -1, axis=0)
    sy = _slot(spins, ay) * np.roll(_slot(spins, by), -1, axis=1)
    s1, s2, _, s4 = spins
    total = (bonds.eta_x * sx + bonds.eta_y * sy).sum()
    total += bonds.j2 * (bonds.eta2 * s1 * s2).sum()
    total += bonds.j3 * (bonds.eta3 * s1 * s4).sum()
    return -float(total)


def delta_energy(lattice: CellSpinLattice, bonds: BondDisorder, cell, pair_choice: int,
                 wiring=WIRING_PRIMARY) -> float:
    """Energy change of flipping one constraint-preserving spin pair, O(1)."""
    if not 0 <= pair_choice < 6:
        raise ValueError(f"pair_choice must be in 0..5, got {pair_choice}")
    ix, iy = cell
    L = lattice.L
    st = lattice.states
    old = int(st[ix, iy])
    new = old ^ int(PAIR_MASKS[pair_choice])
    so, sn = SPIN_TABLE[old], SPIN_TABLE[new]
    (ax, bx), (ay, by) = wiring

    d = 0.0
    if L == 1:  # the two inter-cell bonds close onto the cell itself
        d += bonds.eta_x[ix, iy] * (sn[ax - 1] * sn[bx - 1] - so[ax - 1] * so[bx - 1])
        d += bonds.eta_y[ix, iy] * (sn[ay - 1] * sn[by - 1] - so[ay - 1] * so[by - 1])
    else:
        right = SPIN_TABLE[st[(ix + 1) % L, iy]]
        left = SPIN_TABLE[st[(ix - 1) % L, iy]]
        up = SPIN_TABLE[st[ix, (iy + 1) % L]]
        down = SPIN_TABLE[st[ix, (iy - 1) % L]]
        d += bonds.eta_x[ix, iy] * (sn[ax - 1] - so[ax - 1]) * right[bx - 1]
        d += bonds.eta_x[(ix - 1) % L, iy] * left[ax - 1] * (sn[bx - 1] - so[bx - 1])
        d += bonds.eta_y[ix, iy] * (sn[ay - 1] - so[ay - 1]) * up[by - 1]
        d += bonds.eta_y[ix, (iy - 1) % L] * down[ay - 1] * (sn[by - 1] - so[by - 1])
    d += bonds.j2 * bonds.eta2[ix, iy] * (sn[0] * sn[1] - so[0] * so[1])
    d += bonds.j3 * bonds.eta3[ix, iy] * (sn[0] * sn[3] - so[0] * so[3])
    return -float(d)


def _energy_batch(states: np.ndarray, bonds: BondDisorder, wiring) -> np.ndarray:
    """Energies of a (B, L, L) batch of state arrays."""
    t = SPIN_TABLE[states]
    spins = tuple(t[..., k] for k in range(4))
    (ax, bx), (ay, by) = wiring
    sx = _slot(spins, ax) * np.roll(_slot(spins, bx), -1, axis=1)
    sy = _slot(spins, ay) * np.roll(_slot(spins, by), -1, axis=2)
    s1, s2, _, s4 = spins
    tot = (bonds.eta_x * sx + bonds.eta_y * sy).sum(axis=(1, 2)).astype(np.float64)
    tot += bonds.j2 * (bonds.eta2 * s1 * s2).sum(axis=(1, 2))
    tot += bonds.j3 * (bonds.eta3 * s1 * s4).sum(axis=(1, 2))
    return -tot


def all_states(L: int) -> np.ndarray:
    """All 8^(L*L) constraint-satisfying state arrays, shape (8^(L*L), L, L)."""
    n_cells = L * L
    n = 8 ** n_cells
    codes = np.arange(n)
    out = np.empty((n, n_cells), dtype=np.uint8)
    for c in range(n_cells):
        out[:, c] = (codes // (8 ** c)) % 8
    return out.reshape(n, L, L)


def enumerate_partition_function(bonds: BondDisorder, beta: float,
                                 wiring=WIRING_PRIMARY) -> float:
    """log Z by exact enumeration over constraint-satisfying states (L <= 2)."""
    L = bonds.L
    if L > ENUM_MAX_L:
        raise CapacityError(f"exact enumeration limited to L <= {ENUM_MAX_L}, got {L}")
    energies = _energy_batch(all_states(L), bonds, wiring)
    return float(logsumexp(-beta * energies))


def insert_domain_wall(bonds: BondDisorder, direction: str) -> BondDisorder:
    """Flip eta on the L inter-cell bonds crossing one non-contractible cut."""
    out = bonds.copy()
    if direction == "vertical":
        out.eta_x[0, :] *= -1
    elif direction == "horizontal":
        out.eta_y[:, 0] *= -1
    else:
        raise ValueError(f"direction must be 'vertical' or 'horizontal', got {direction!r}")
    return out


def gauge_transform(lattice: CellSpinLattice, bonds: BondDisorder,
                    cell_mask: np.ndarray):
    """Nishimori gauge: flip all four spins of masked cells and their l1 bonds."""
    mask = cell_mask.astype(bool)
    new_states = np.where(mask, lattice.states ^ 7, lattice.states).astype(np.uint8)
    flip_x = mask ^ np.roll(mask, -1, axis=0)
    flip_y = mask ^ np.roll(mask, -1, axis=1)
    out = bonds.copy()
    out.eta_x[flip_x] *= -1
    out.eta_y[flip_y] *= -1
    return CellSpinLattice(states=new_states), out


def u_diag_quartic(s1, s2, s3, s4, kind: int):
    """Crossing indicator of a diagonal edge from the unconstrained quartic map."""
    if kind == 2:
        return -0.5 * (s1 * s2 - 1) * (s3 * s4 - 1) + 1
    if kind == 3:
        return -0.5 * (s1 * s4 - 1) * (s2 * s3 - 1) + 1
    raise ValueError(f"kind must be 2 or 3, got {kind}")


# ---------------------------------------------------------------------------
# Open-boundary variant for the statmech/code equivalence oracle.  Cells are
# the plaquettes of a planar layout; y-direction bonds whose neighbor cell
# falls off the grid couple to a single shared outer-region spin instead.
# Bank edges along the left/right boundaries carry zero coupling and are
# omitted.  At beta = J1/2 the partition function over one logical class
# reproduces the coset probability of the code.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpenTerm:
    coeff: float
    eta_sign: int
    kind: str  # "intra" | "inter" | "outer"
    cell_a: int
    slot_a: int
    cell_b: int = -1
    slot_b: int = -1


def _open_terms(edges: EdgeSet, params: EffectiveParams, dis: EdgeDisorder,
                wiring) -> tuple[list[OpenTerm], int]:
    from .edgemap import edge_pbars  # local import to avoid a cycle at module load

    layout = edges.layout
    d = layout.distance
    n_cells = d * (d - 1)
    # per-edge reduced couplings: boundary diagonals own one pair and are stiffer
    pb1, pb2, pb3 = edge_pbars(edges, params)
    co2 = np.log((1.0 - pb2) / pb2) / params.j1
    co3 = np.log((1.0 - pb3) / pb3) / params.j1

    def cell_id(ix: int, iy: int) -> int:
        return iy * d + ix

    (ax, bx), (ay, by) = wiring
    terms: list[OpenTerm] = []
    for k, (x, y) in enumerate(layout.qubit_coords):
        eta = int(dis.eta1[k])
        if x % 2 == 0:  # vertical qubit: x-direction bond, both cells interior
            ix, iy = x // 2, (y - 1) // 2
            terms.append(OpenTerm(1.0, eta, "inter",
                                  cell_id(ix - 1, iy), ax, cell_id(ix, iy), bx))
        else:  # horizontal qubit: y-direction bond, may touch the outer region
            ix = (x - 1) // 2
            iy_lower, iy_upper = y // 2 - 1, y // 2
            if iy_lower < 0:
                terms.append(OpenTerm(1.0, eta, "outer", cell_id(ix, iy_upper), by))
            elif iy_upper > d - 2:
                terms.append(OpenTerm(1.0, eta, "outer", cell_id(ix, iy_lower), ay))
            else:
                terms.append(OpenTerm(1.0, eta, "inter",
                                      cell_id(ix, iy_lower), ay, cell_id(ix, iy_upper), by))
    for p in range(len(layout.z_stabilizers)):
        cx, cy = layout.z_stab_coords[p]
        c = cell_id((cx - 1) // 2, (cy - 1) // 2)
        terms.append(OpenTerm(float(co2[p]), int(dis.eta2[p]), "intra", c, 1, c, 2))
        terms.append(OpenTerm(float(co3[p]), int(dis.eta3[p]), "intra", c, 1, c, 4))
    return terms, n_cells


def open_log_z(edges: EdgeSet, dis: EdgeDisorder, params: EffectiveParams,
               beta: float, wiring=WIRING_PRIMARY) -> float:
    """log Z of the open-boundary model for one quenched edge disorder."""
    d = edges.layout.distance
    if d > OPEN_ENUM_MAX_D:
        raise CapacityError(f"open-boundary enumeration limited to d <= {OPEN_ENUM_MAX_D}")
    terms, n_cells = _open_terms(edges, params, dis, wiring)
    n_states = 1 << (3 * n_cells + 1)
    codes = np.arange(n_states, dtype=np.int64)
    cell_spins = []
    for c in range(n_cells):
        cell_spins.append(SPIN_TABLE[(codes >> (3 * c)) & 7])  # (n_states, 4) int8
    outer = (1 - 2 * ((codes >> (3 * n_cells)) & 1)).astype(np.int8)

    neg_e = np.zeros(n_states)
    for t in terms:
        a = cell_spins[t.cell_a][:, t.slot_a - 1]
        if t.kind == "outer":
            b = outer
        else:
            b = cell_spins[t.cell_b][:, t.slot_b - 1]
        neg_e += (t.coeff * t.eta_sign) * (a.astype(np.int32) * b)
    return float(logsumexp(beta * neg_e))


def flip_logical_line(edges: EdgeSet, dis: EdgeDisorder) -> EdgeDisorder:
    """Multiply eta by the crossing pattern of one left-to-right logical chain."""
    layout = edges.layout
    eta1 = dis.eta1.copy()
    for q in sorted(layout.logical_z_support):
        eta1[q] *= -1
    return replace(dis, eta1=eta1)
