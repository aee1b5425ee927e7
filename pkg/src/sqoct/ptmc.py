"""Parallel-tempering Monte Carlo over the constrained cell model and the
square-lattice reference model.

Determinism contract: every random stream is a counter-based Philox generator
keyed by (master seed, sample, phase, segment, replica), so results are a pure
function of the run parameters and are independent of the worker count and of
checkpoint/resume boundaries (checkpoints cut only at segment edges).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context

import numpy as np

from . import kernels
from .edgemap import EffectiveParams, effective_params
from .rbim import BondDisorder, CellSpinLattice

PHASE_DISORDER = 0
PHASE_INIT = 1
PHASE_EQUIL = 2
PHASE_MEASURE = 3

_RAND_BLOCK_SWEEPS = 200  # randomness drawn per replica per batch

CHECKPOINT_FORMAT = 1


def stream(master_seed: int, *key) -> np.random.Generator:
    """Counter-based generator for a fixed position in the run's stream tree."""
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=int(master_seed),
                               spawn_key=tuple(int(k) for k in key))
    ))


@dataclass(frozen=True)
class RunProtocol:
    """Sweep-count policy for one disorder sample."""

    b: int  # equilibration hard cap of 2**b sweeps
    n_samples: int
    test_interval: int = 10_000
    measure_sweeps: int = 200_000
    measure_stride: int = 5
    exchange_every: int = 10
    elog_every: int = 10
    checkpoint_every: int = 100_000

    def __post_init__(self):
        for name in ("b", "n_samples", "test_interval", "measure_sweeps",
                     "measure_stride", "exchange_every", "elog_every",
                     "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.measure_sweeps % self.measure_stride:
            raise ValueError("measure_stride must divide measure_sweeps")
        for name in ("exchange_every", "elog_every", "measure_stride"):
            if self.test_interval % getattr(self, name):
                raise ValueError(f"{name} must divide test_interval")

    @property
    def equil_cap(self) -> int:
        return 1 << self.b


def make_ladder(t_min: float, t_max: float, n_t: int) -> np.ndarray:
    """Uniform temperature ladder on [t_min, t_max]."""
    if not (0 < t_min < t_max) or n_t < 2:
        raise ValueError("need 0 < t_min < t_max and at least 2 temperatures")
    return np.linspace(t_min, t_max, n_t)


def _flat(arr2d: np.ndarray) -> np.ndarray:
    """[ix, iy]-indexed array -> flat vector with c = ix + iy * L."""
    return np.ascontiguousarray(arr2d.T).reshape(-1)


def _unflat(v: np.ndarray, L: int) -> np.ndarray:
    return np.ascontiguousarray(v.reshape(L, L).T)


def _grid_indices(L: int):
    c = np.arange(L * L, dtype=np.int64)
    ix, iy = c % L, c // L
    right = ((ix + 1) % L + iy * L).astype(np.int64)
    left = ((ix - 1) % L + iy * L).astype(np.int64)
    up = (ix + ((iy + 1) % L) * L).astype(np.int64)
    down = (ix + ((iy - 1) % L) * L).astype(np.int64)
    return right, left, up, down


# ---------------------------------------------------------------------------
# model operations: everything the engine needs, per model family
# ---------------------------------------------------------------------------

class CellModelOps:
    """Constrained square-octagonal model driven by random pair flips."""

    name = "cell"
    state_dtype = np.uint8
    # x offsets of the four spins inside a cell (quarter-corner embedding)
    _offsets = (0.25, -0.25, -0.25, 0.25)

    def __init__(self, L: int, p: float):
        self.L = L
        self.params: EffectiveParams = effective_params(p, p)
        self.n_moves = L * L
        self.right, self.left, self.up, self.down = _grid_indices(L)
        k = 2.0 * np.pi / L
        xs = np.arange(L)
        self.cs = np.stack([np.cos(k * (xs + o)) for o in self._offsets])
        self.sn = np.stack([np.sin(k * (xs + o)) for o in self._offsets])

    def sample_disorder(self, rng) -> dict:
        bonds = BondDisorder.sample(self.L, self.params, rng)
        return {"eta_x": _flat(bonds.eta_x), "eta_y": _flat(bonds.eta_y),
                "eta2": _flat(bonds.eta2), "eta3": _flat(bonds.eta3)}

    def bonds_from_disorder(self, dis: dict) -> BondDisorder:
        L = self.L
        return BondDisorder(
            eta_x=_unflat(dis["eta_x"], L), eta_y=_unflat(dis["eta_y"], L),
            eta2=_unflat(dis["eta2"], L), eta3=_unflat(dis["eta3"], L),
            j2=self.params.j2p, j3=self.params.j3p,
        )

    def random_state(self, rng) -> np.ndarray:
        return rng.integers(0, 8, size=self.L * self.L, dtype=np.uint8)

    def acceptance_tables(self, beta: float):
        return kernels.cell_acceptance_tables(beta, self.params.j2p, self.params.j3p)

    def energy(self, state, dis) -> float:
        return kernels.energy_cell(state, dis["eta_x"], dis["eta_y"], dis["eta2"],
                                   dis["eta3"], self.right, self.up,
                                   self.params.j2p, self.params.j3p)

    def draw_moves(self, gen, n_sweeps: int):
        n = n_sweeps * self.n_moves
        return (gen.integers(0, self.L * self.L, size=n, dtype=np.int64),
                gen.integers(0, 6, size=n, dtype=np.uint8),
                gen.random(n))

    def draw_moves_stack(self, gens, n_sweeps: int):
        n = n_sweeps * self.n_moves
        R = len(gens)
        cells = np.empty((R, n), dtype=np.int64)
        masks = np.empty((R, n), dtype=np.uint8)
        urand = np.empty((R, n))
        for r, g in enumerate(gens):
            cells[r] = g.integers(0, self.L * self.L, size=n, dtype=np.int64)
            masks[r] = g.integers(0, 6, size=n, dtype=np.uint8)
            urand[r] = g.random(n)
        return cells, masks, urand

    def sweep_slice(self, state, dis, tables, rands, k0, n_sweeps) -> float:
        acc, dh = tables
        cells, masks, urand = rands
        return kernels.sweep_cell(state, dis["eta_x"], dis["eta_y"], dis["eta2"],
                                  dis["eta3"], self.right, self.left, self.up,
                                  self.down, acc, dh, cells, masks, urand,
                                  k0 * self.n_moves, n_sweeps * self.n_moves)

    def sweep_stack(self, states, perm, dis, accs, dhs, rands, k0, n_sweeps, de_out):
        cells, masks, urand = rands
        kernels.sweep_cell_stack(states, perm, dis["eta_x"], dis["eta_y"],
                                 dis["eta2"], dis["eta3"], self.right, self.left,
                                 self.up, self.down, accs, dhs, cells, masks,
                                 urand, k0 * self.n_moves,
                                 n_sweeps * self.n_moves, de_out)

    def fourier_stack(self, states, out):
        kernels.fourier_cell_stack(states, self.cs, self.sn, out)

    def fourier(self, state):
        return kernels.fourier_cell(state, self.cs, self.sn)

    @property
    def chi_norm(self) -> float:
        return float(self.L * self.L)


class SquareModelOps:
    """Plain square-lattice +-J reference model with single-spin flips."""

    name = "square"
    state_dtype = np.int8

    def __init__(self, L: int, p: float):
        if not 0.0 < p < 0.5:
            raise ValueError(f"need 0 < p < 1/2, got {p}")
        self.L = L
        self.p = float(p)
        self.n_moves = L * L
        self.right, self.left, self.up, self.down = _grid_indices(L)
        k = 2.0 * np.pi / L
        xs = np.arange(L)
        self.cs = np.cos(k * xs)
        self.sn = np.sin(k * xs)

    @property
    def beta_n(self) -> float:
        return 0.5 * math.log((1.0 - self.p) / self.p)

    def sample_disorder(self, rng) -> dict:
        draw = lambda: np.where(rng.random(self.L * self.L) < self.p, -1, 1).astype(np.int8)
        return {"eta_x": draw(), "eta_y": draw()}

    def random_state(self, rng) -> np.ndarray:
        return rng.choice(np.array([-1, 1], dtype=np.int8), size=self.L * self.L)

    def acceptance_tables(self, beta: float):
        return kernels.square_acceptance_tables(beta)

    def energy(self, state, dis) -> float:
        return kernels.energy_square(state, dis["eta_x"], dis["eta_y"],
                                     self.right, self.up)

    def draw_moves(self, gen, n_sweeps: int):
        n = n_sweeps * self.n_moves
        return (gen.integers(0, self.L * self.L, size=n, dtype=np.int64), None,
                gen.random(n))

    def draw_moves_stack(self, gens, n_sweeps: int):
        n = n_sweeps * self.n_moves
        R = len(gens)
        cells = np.empty((R, n), dtype=np.int64)
        urand = np.empty((R, n))
        for r, g in enumerate(gens):
            cells[r] = g.integers(0, self.L * self.L, size=n, dtype=np.int64)
            urand[r] = g.random(n)
        return cells, None, urand

    def sweep_slice(self, state, dis, tables, rands, k0, n_sweeps) -> float:
        acc, dh = tables
        cells, _, urand = rands
        return kernels.sweep_square(state, dis["eta_x"], dis["eta_y"], self.right,
                                    self.left, self.up, self.down, acc, dh,
                                    cells, urand, k0 * self.n_moves,
                                    n_sweeps * self.n_moves)

    def sweep_stack(self, states, perm, dis, accs, dhs, rands, k0, n_sweeps, de_out):
        cells, _, urand = rands
        kernels.sweep_square_stack(states, perm, dis["eta_x"], dis["eta_y"],
                                   self.right, self.left, self.up, self.down,
                                   accs, dhs, cells, urand, k0 * self.n_moves,
                                   n_sweeps * self.n_moves, de_out)

    def fourier_stack(self, states, out):
        kernels.fourier_square_stack(states, self.cs, self.sn, out)

    def fourier(self, state):
        return kernels.fourier_square(state, self.cs, self.sn)

    @property
    def chi_norm(self) -> float:
        return float(self.L * self.L)


def model_ops(model: str, L: int, p: float):
    if model == "cell":
        return CellModelOps(L, p)
    if model == "square":
        return SquareModelOps(L, p)
    raise ValueError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# ensemble of replicas at one quenched disorder
# ---------------------------------------------------------------------------

@dataclass
class Ensemble:
    ops: object
    disorder: dict
    temperatures: np.ndarray
    states: np.ndarray  # (n_t, L*L); row i = configuration at temperature i
    replica_ids: np.ndarray
    energies: np.ndarray  # running energies, refreshed at segment boundaries
    exchange_parity: int = 0
    exchange_attempts: np.ndarray | None = None
    exchange_accepts: np.ndarray | None = None
    sweep_count: int = 0

    def __post_init__(self):
        t = np.asarray(self.temperatures, dtype=float)
        if not np.all(np.diff(t) > 0):
            raise ValueError("temperatures must be strictly increasing")
        n = len(t)
        if self.exchange_attempts is None:
            self.exchange_attempts = np.zeros(n - 1, dtype=np.int64)
        if self.exchange_accepts is None:
            self.exchange_accepts = np.zeros(n - 1, dtype=np.int64)

    @property
    def n_t(self) -> int:
        return len(self.temperatures)

    @property
    def betas(self) -> np.ndarray:
        return 1.0 / np.asarray(self.temperatures, dtype=float)

    def refresh_energies(self):
        for i in range(self.n_t):
            self.energies[i] = self.ops.energy(self.states[i], self.disorder)

    def exchange_acceptance(self) -> np.ndarray:
        return self.exchange_accepts / np.maximum(self.exchange_attempts, 1)


def make_ensemble(ops, disorder: dict, temperatures, master_seed: int,
                  sample: int) -> Ensemble:
    n_t = len(temperatures)
    states = np.empty((n_t, ops.L * ops.L), dtype=ops.state_dtype)
    for r in range(n_t):
        states[r] = ops.random_state(stream(master_seed, sample, PHASE_INIT, r))
    ens = Ensemble(ops=ops, disorder=disorder,
                   temperatures=np.asarray(temperatures, float),
                   states=states, replica_ids=np.arange(n_t),
                   energies=np.zeros(n_t))
    ens.refresh_energies()
    return ens


def replica_exchange(ens: Ensemble, rng) -> None:
    """One exchange pass over alternating adjacent temperature pairs."""
    start = ens.exchange_parity
    ens.exchange_parity ^= 1
    betas = ens.betas
    u = rng.random(ens.n_t - 1)
    for i in range(start, ens.n_t - 1, 2):
        ens.exchange_attempts[i] += 1
        gain = (betas[i] - betas[i + 1]) * (ens.energies[i] - ens.energies[i + 1])
        if gain >= 0 or u[i] < math.exp(gain):
            ens.exchange_accepts[i] += 1
            tmp = ens.states[i].copy()
            ens.states[i] = ens.states[i + 1]
            ens.states[i + 1] = tmp
            ens.energies[[i, i + 1]] = ens.energies[[i + 1, i]]
            ens.replica_ids[[i, i + 1]] = ens.replica_ids[[i + 1, i]]


def _cell_ops_for(L: int, bonds: BondDisorder) -> CellModelOps:
    """Ops bound to explicit couplings (for the standalone sweep operation)."""
    ops = CellModelOps.__new__(CellModelOps)
    ops.L = L
    ops.n_moves = L * L
    ops.right, ops.left, ops.up, ops.down = _grid_indices(L)
    k = 2.0 * np.pi / L
    xs = np.arange(L)
    ops.cs = np.stack([np.cos(k * (xs + o)) for o in CellModelOps._offsets])
    ops.sn = np.stack([np.sin(k * (xs + o)) for o in CellModelOps._offsets])

    class _P:  # only the couplings are consumed on these paths
        j2p = bonds.j2
        j3p = bonds.j3

    ops.params = _P()
    return ops


def sweep(replica: CellSpinLattice, bonds: BondDisorder, beta: float, rng,
          n_sweeps: int = 1) -> CellSpinLattice:
    """Metropolis sweeps (L^2 random pair-flip proposals each) on a cell lattice."""
    gen = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    L = replica.L
    ops = _cell_ops_for(L, bonds)
    dis = {"eta_x": _flat(bonds.eta_x), "eta_y": _flat(bonds.eta_y),
           "eta2": _flat(bonds.eta2), "eta3": _flat(bonds.eta3)}
    tables = kernels.cell_acceptance_tables(beta, bonds.j2, bonds.j3)
    state = _flat(replica.states)
    rands = ops.draw_moves(gen, n_sweeps)
    ops.sweep_slice(state, dis, tables, rands, 0, n_sweeps)
    replica.states = _unflat(state, L)
    return replica


# ---------------------------------------------------------------------------
# engine: segments, equilibration test, measurement
# ---------------------------------------------------------------------------

@dataclass
class MeasureAcc:
    sum_chi0: np.ndarray
    sum_chik: np.ndarray
    sum_e: np.ndarray
    n_snap: int = 0

    @classmethod
    def zeros(cls, n_t: int) -> "MeasureAcc":
        return cls(np.zeros(n_t), np.zeros(n_t), np.zeros(n_t), 0)


def _advance_segment(ens: Ensemble, protocol: RunProtocol, n_sweeps: int,
                     gens: list, exch_gen, accs, dhs, phase_base: int = 0,
                     elog=None, elog_count=None,
                     macc: MeasureAcc | None = None) -> None:
    """Advance all replicas n_sweeps with exchange/logging/measurement hooks.

    Cadences are phase-local: hooks fire on multiples of (phase_base + done).
    """
    ops = ens.ops
    tick = math.gcd(protocol.exchange_every, protocol.elog_every)
    if macc is not None:
        tick = math.gcd(tick, protocol.measure_stride)
    block = max(tick, _RAND_BLOCK_SWEEPS - (_RAND_BLOCK_SWEEPS % tick))
    done = 0
    rands = None
    block_left = 0
    k0 = 0
    four = np.zeros((ens.n_t, 3))
    while done < n_sweeps:
        if block_left == 0:
            nb = min(block, n_sweeps - done)
            rands = ops.draw_moves_stack(gens, nb)
            block_left = nb
            k0 = 0
        step = min(tick, block_left)
        ops.sweep_stack(ens.states, ens.replica_ids, ens.disorder, accs, dhs,
                        rands, k0, step, ens.energies)
        done += step
        block_left -= step
        k0 += step
        sweeps_now = phase_base + done
        if sweeps_now % protocol.exchange_every == 0:
            replica_exchange(ens, exch_gen)
        if elog is not None and sweeps_now % protocol.elog_every == 0:
            elog[:, elog_count[0]] = ens.energies
            elog_count[0] += 1
        if macc is not None and sweeps_now % protocol.measure_stride == 0:
            ops.fourier_stack(ens.states, four)
            macc.sum_chi0 += four[:, 0] ** 2 / ops.chi_norm
            macc.sum_chik += (four[:, 1] ** 2 + four[:, 2] ** 2) / ops.chi_norm
            macc.sum_e += ens.energies
            macc.n_snap += 1
    ens.sweep_count += n_sweeps
    ens.refresh_energies()


def _blocked_stats(x: np.ndarray, n_blocks: int = 25):
    x = np.asarray(x, dtype=float)
    nb = min(n_blocks, len(x))
    if nb < 2:
        return float(x.mean()), 0.0
    means = np.array([blk.mean() for blk in np.array_split(x, nb)])
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(nb))


def _log_bins_agree(series: np.ndarray) -> bool:
    """Last two logarithmic bins of an energy series agree within 2 SE."""
    t = len(series)
    if t < 8:
        return False
    m1, s1 = _blocked_stats(series[t // 2:])
    m2, s2 = _blocked_stats(series[t // 4: t // 2])
    tol = 2.0 * math.hypot(s1, s2)
    return abs(m1 - m2) <= tol


@dataclass
class EquilReport:
    sweeps: int
    passed: bool  # True if stopped by two consecutive passing tests
    history: list = field(default_factory=list)
    cap: int = 0


def _make_tables(ens: Ensemble):
    pairs = [ens.ops.acceptance_tables(b) for b in ens.betas]
    accs = np.stack([p[0] for p in pairs])
    dhs = np.stack([p[1] for p in pairs])
    return accs, dhs


def equilibrate(ens: Ensemble, protocol: RunProtocol, master_seed: int, sample: int,
                _state=None, _hook=None) -> EquilReport:
    """Sweep until two consecutive equilibration tests pass or 2^b sweeps elapse.

    A test runs every test_interval sweeps and passes when, at every
    temperature, the mean energies of the last two logarithmic bins agree
    within two combined (block-estimated) standard errors.
    """
    cap = protocol.equil_cap
    n_entries = cap // protocol.elog_every + 1
    if _state is None:
        elog = np.zeros((ens.n_t, n_entries), dtype=np.float32)
        elog_count = [0]
        history: list[bool] = []
        seg = 0
        consecutive = 0
    else:
        elog, elog_count, history, seg, consecutive = _state
    accs, dhs = _make_tables(ens)
    done = min(seg * protocol.test_interval, cap)
    if consecutive >= 2:  # resumed exactly at the early-stop point
        return EquilReport(sweeps=done, passed=True, history=history, cap=cap)
    while done < cap:
        n = min(protocol.test_interval, cap - done)
        gens = [stream(master_seed, sample, PHASE_EQUIL, seg, r)
                for r in range(ens.n_t)]
        exch_gen = stream(master_seed, sample, PHASE_EQUIL, seg, ens.n_t)
        _advance_segment(ens, protocol, n, gens, exch_gen, accs, dhs,
                         phase_base=done, elog=elog, elog_count=elog_count)
        done += n
        seg += 1
        ok = all(_log_bins_agree(elog[i, :elog_count[0]]) for i in range(ens.n_t))
        history.append(ok)
        consecutive = consecutive + 1 if ok else 0
        if _hook is not None:
            _hook("equil", seg, (elog, elog_count, history, seg, consecutive))
        if consecutive >= 2:
            return EquilReport(sweeps=done, passed=True, history=history, cap=cap)
    return EquilReport(sweeps=cap, passed=False, history=history, cap=cap)


def measure(ens: Ensemble, protocol: RunProtocol, master_seed: int, sample: int,
            _state=None, _hook=None) -> MeasureAcc:
    """Measurement phase: measure_sweeps sweeps, sampling every stride."""
    if _state is None:
        macc = MeasureAcc.zeros(ens.n_t)
        seg = 0
    else:
        macc, seg = _state
    accs, dhs = _make_tables(ens)
    total_segs = math.ceil(protocol.measure_sweeps / protocol.test_interval)
    while seg < total_segs:
        base = seg * protocol.test_interval
        n = min(protocol.test_interval, protocol.measure_sweeps - base)
        gens = [stream(master_seed, sample, PHASE_MEASURE, seg, r)
                for r in range(ens.n_t)]
        exch_gen = stream(master_seed, sample, PHASE_MEASURE, seg, ens.n_t)
        _advance_segment(ens, protocol, n, gens, exch_gen, accs, dhs,
                         phase_base=base, macc=macc)
        seg += 1
        if _hook is not None:
            _hook("measure", seg, (macc, seg))
    return macc


# ---------------------------------------------------------------------------
# disorder-ensemble orchestration with checkpoint/resume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleResult:
    sample: int
    temperatures: np.ndarray
    chi0: np.ndarray  # thermal means per temperature
    chik: np.ndarray
    energy: np.ndarray
    n_snap: int
    equil_sweeps: int
    equil_passed: bool
    exch_acc_min: float


def run_key(model: str, p: float, L: int, temperatures, protocol: RunProtocol,
            master_seed: int, sample: int) -> str:
    blob = json.dumps({
        "model": model, "p": p, "L": L,
        "temps": [repr(float(t)) for t in temperatures],
        "protocol": asdict(protocol), "seed": master_seed, "sample": sample,
        "format": CHECKPOINT_FORMAT,
    }, sort_keys=True)
    import hashlib

    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class _Checkpointer:
    """Writes resumable snapshots at segment boundaries."""

    def __init__(self, path, key: str, ens: Ensemble, protocol: RunProtocol):
        self.path = path
        self.key = key
        self.ens = ens
        self.every_segs = max(1, protocol.checkpoint_every // protocol.test_interval)

    def save(self, phase: str, seg: int, payload, equil_done=None, force=False):
        if self.path is None:
            return
        if not force and seg % self.every_segs:
            return
        ens = self.ens
        data = {
            "key": np.array(self.key), "phase": np.array(phase),
            "states": ens.states, "replica_ids": ens.replica_ids,
            "exchange_parity": np.array(ens.exchange_parity),
            "exchange_attempts": ens.exchange_attempts,
            "exchange_accepts": ens.exchange_accepts,
            "sweep_count": np.array(ens.sweep_count),
        }
        if phase == "equil":
            elog, elog_count, history, seg_, consecutive = payload
            data.update(elog=elog, elog_count=np.array(elog_count[0]),
                        history=np.array(history, dtype=bool),
                        seg=np.array(seg_), consecutive=np.array(consecutive))
        else:
            macc, seg_ = payload
            data.update(sum_chi0=macc.sum_chi0, sum_chik=macc.sum_chik,
                        sum_e=macc.sum_e, n_snap=np.array(macc.n_snap),
                        seg=np.array(seg_),
                        equil_sweeps=np.array(equil_done[0]),
                        equil_passed=np.array(equil_done[1]),
                        equil_history=np.array(equil_done[2], dtype=bool))
        tmp = f"{self.path}.tmp"
        np.savez_compressed(tmp, **data)
        os.replace(tmp + ".npz" if not str(tmp).endswith(".npz") else tmp, self.path)


def _load_checkpoint(path, key: str):
    if path is None or not os.path.exists(path):
        return None
    try:
        with np.load(path, allow_pickle=False) as z:
            if str(z["key"]) != key:
                return None
            return {k: z[k].copy() for k in z.files}
    except (OSError, ValueError, KeyError):
        return None


def run_sample(model: str, p: float, L: int, temperatures, protocol: RunProtocol,
               master_seed: int, sample: int, checkpoint_path=None) -> SampleResult:
    """Equilibrate and measure one disorder sample; resumable via checkpoint."""
    ops = model_ops(model, L, p)
    key = run_key(model, p, L, temperatures, protocol, master_seed, sample)
    dis = ops.sample_disorder(stream(master_seed, sample, PHASE_DISORDER))
    ens = make_ensemble(ops, dis, temperatures, master_seed, sample)

    ck = _load_checkpoint(checkpoint_path, key)
    equil_state = None
    measure_state = None
    equil_done = None
    if ck is not None:
        ens.states[:] = ck["states"]
        ens.replica_ids[:] = ck["replica_ids"]
        ens.exchange_parity = int(ck["exchange_parity"])
        ens.exchange_attempts[:] = ck["exchange_attempts"]
        ens.exchange_accepts[:] = ck["exchange_accepts"]
        ens.sweep_count = int(ck["sweep_count"])
        ens.refresh_energies()
        if str(ck["phase"]) == "equil":
            equil_state = (ck["elog"], [int(ck["elog_count"])],
                           list(ck["history"]), int(ck["seg"]),
                           int(ck["consecutive"]))
        else:
            macc = MeasureAcc(ck["sum_chi0"], ck["sum_chik"], ck["sum_e"],
                              int(ck["n_snap"]))
            measure_state = (macc, int(ck["seg"]))
            equil_done = (int(ck["equil_sweeps"]), bool(ck["equil_passed"]),
                          list(ck["equil_history"]))

    cp = _Checkpointer(checkpoint_path, key, ens, protocol)

    if equil_done is None:
        hook = (lambda phase, seg, payload: cp.save(phase, seg, payload))
        report = equilibrate(ens, protocol, master_seed, sample,
                             _state=equil_state, _hook=hook)
        equil_done = (report.sweeps, report.passed, report.history)
        measure_state = None

    hook = (lambda phase, seg, payload:
            cp.save(phase, seg, payload, equil_done=equil_done))
    macc = measure(ens, protocol, master_seed, sample,
                   _state=measure_state, _hook=hook)

    n = max(macc.n_snap, 1)
    return SampleResult(
        sample=sample,
        temperatures=np.asarray(temperatures, dtype=float),
        chi0=macc.sum_chi0 / n, chik=macc.sum_chik / n, energy=macc.sum_e / n,
        n_snap=macc.n_snap,
        equil_sweeps=equil_done[0], equil_passed=bool(equil_done[1]),
        exch_acc_min=float(ens.exchange_acceptance().min()) if ens.n_t > 1 else 1.0,
    )


def _run_sample_star(args):
    return run_sample(*args)


def run_disorder_ensemble(model: str, p: float, L: int, temperatures,
                          protocol: RunProtocol, master_seed: int,
                          workers: int = 1, checkpoint_dir=None,
                          progress=None) -> list[SampleResult]:
    """All N_sa quenched samples at one (p, L), embarrassingly parallel.

    Results are ordered by sample index and independent of the worker count.
    """
    jobs = []
    for s in range(protocol.n_samples):
        cp = None
        if checkpoint_dir is not None:
            os.makedirs(checkpoint_dir, exist_ok=True)
            cp = os.path.join(checkpoint_dir,
                              f"{model}_p{p:g}_L{L}_s{s}.npz")
        jobs.append((model, p, L, temperatures, protocol, master_seed, s, cp))

    results: list[SampleResult] = []
    if workers <= 1:
        for j in jobs:
            results.append(_run_sample_star(j))
            if progress:
                progress(len(results), len(jobs))
    else:
        ctx = get_context("spawn")
        with ctx.Pool(processes=workers) as pool:
            for res in pool.imap(_run_sample_star, jobs, chunksize=1):
                results.append(res)
                if progress:
                    progress(len(results), len(jobs))
    results.sort(key=lambda r: r.sample)
    return results
