"""Finite-size scaling analysis: susceptibilities, correlation lengths,
crossing detection and the threshold scan."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import CapacityError, UnbracketedThresholdError
from .rbim import (BondDisorder, CellSpinLattice, enumerate_partition_function,
                   insert_domain_wall)

CROSSING = "crossing"
NO_CROSSING = "no-crossing"
INCONCLUSIVE = "inconclusive"

# x offsets of the four cell spins; must match the engine's embedding
SPIN_X_OFFSETS = (0.25, -0.25, -0.25, 0.25)


def susceptibility(snapshot: CellSpinLattice, k: float) -> float:
    """chi(k) = |sum_i s_i e^{i k x_i}|^2 / L^2 for one spin snapshot.

    Only the x component of the wave vector enters; spin positions are the
    cell coordinate plus the quarter-cell offsets of the four sublattices.
    """
    L = snapshot.L
    s1, s2, s3, s4 = snapshot.spins()
    ix = np.arange(L).reshape(L, 1)
    z = 0j
    for s, off in zip((s1, s2, s3, s4), SPIN_X_OFFSETS):
        z += (s * np.exp(1j * k * (ix + off))).sum()
    return float(abs(z) ** 2) / (L * L)


def correlation_length(chi0: float, chik: float, L: int) -> float:
    """Second-moment finite-size correlation length from chi(0) and chi(k_min).

    Returns 0.0 in the noise regime chi0 < chik (flagged upstream by callers
    that track clipping).
    """
    if chik <= 0:
        raise ValueError(f"chi(k_min) must be positive, got {chik}")
    if chi0 < chik:
        return 0.0
    k_min = 2.0 * math.pi / L
    return math.sqrt(chi0 / chik - 1.0) / (2.0 * math.sin(k_min / 2.0))


@dataclass
class ObservableSeries:
    """Per-disorder-sample thermal means at one (p, L)."""

    p: float
    L: int
    temperatures: np.ndarray
    chi0: np.ndarray  # (n_samples, n_T)
    chik: np.ndarray
    energy: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.chi0.shape[0]

    @classmethod
    def from_results(cls, p: float, L: int, results) -> "ObservableSeries":
        temps = np.asarray(results[0].temperatures, dtype=float)
        return cls(p=p, L=L, temperatures=temps,
                   chi0=np.stack([r.chi0 for r in results]),
                   chik=np.stack([r.chik for r in results]),
                   energy=np.stack([r.energy for r in results]))

    @classmethod
    def from_columns(cls, p: float, L: int, cols: dict) -> "ObservableSeries":
        samples = np.unique(cols["sample"])
        n_t = int(cols["t_index"].max()) + 1
        temps = np.empty(n_t)
        chi0 = np.empty((len(samples), n_t))
        chik = np.empty((len(samples), n_t))
        energy = np.empty((len(samples), n_t))
        order = {s: i for i, s in enumerate(samples)}
        for s, ti, t, c0, ck, e in zip(cols["sample"], cols["t_index"], cols["T"],
                                       cols["chi0"], cols["chik"], cols["energy"]):
            temps[ti] = t
            i = order[s]
            chi0[i, ti], chik[i, ti], energy[i, ti] = c0, ck, e
        return cls(p=p, L=L, temperatures=temps, chi0=chi0, chik=chik, energy=energy)


@dataclass
class XiCurve:
    L: int
    temperatures: np.ndarray
    xi_over_l: np.ndarray
    err: np.ndarray  # bootstrap error of the disorder mean
    chi0: np.ndarray
    chik: np.ndarray
    n_samples: int
    n_clipped: int = 0  # points where chi0 < chik in some resample


def _xi_over_l(chi0_mean: np.ndarray, chik_mean: np.ndarray, L: int) -> np.ndarray:
    out = np.zeros_like(chi0_mean)
    for i, (c0, ck) in enumerate(zip(chi0_mean, chik_mean)):
        out[i] = correlation_length(float(c0), float(ck), L) / L
    return out


def xi_curves(series_list, n_boot: int = 1000, seed: int = 0) -> dict[int, XiCurve]:
    """Disorder-averaged xi/L per (L, T) with bootstrap errors over samples."""
    curves = {}
    for series in series_list:
        if series.n_samples < 2:
            raise CapacityError("need at least 2 disorder samples for error bars")
        L = series.L
        chi0_m = series.chi0.mean(axis=0)
        chik_m = series.chik.mean(axis=0)
        point = _xi_over_l(chi0_m, chik_m, L)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(series.L, int(round(series.p * 1e9)))))
        n = series.n_samples
        boots = np.empty((n_boot, len(series.temperatures)))
        clipped = 0
        for b in range(n_boot):
            idx = rng.integers(0, n, n)
            c0 = series.chi0[idx].mean(axis=0)
            ck = series.chik[idx].mean(axis=0)
            boots[b] = _xi_over_l(c0, ck, L)
            clipped += int(np.any(c0 < ck))
        curves[L] = XiCurve(L=L, temperatures=series.temperatures,
                            xi_over_l=point, err=boots.std(axis=0, ddof=1),
                            chi0=chi0_m, chik=chik_m, n_samples=n,
                            n_clipped=clipped)
    return curves


@dataclass
class PairCrossing:
    l_small: int
    l_large: int
    t_cross: float
    err: float


@dataclass
class CrossingResult:
    p: float
    verdict: str
    t_c: float | None = None
    t_c_err: float | None = None
    pairs: list = field(default_factory=list)
    note: str = ""


def _pair_crossings(curve_a: XiCurve, curve_b: XiCurve):
    """All interpolated intersections of two xi/L curves, with delta-method errors."""
    T = curve_a.temperatures
    diff = PchipInterpolator(T, curve_b.xi_over_l - curve_a.xi_over_l)
    ea = PchipInterpolator(T, curve_a.err)
    eb = PchipInterpolator(T, curve_b.err)
    tt = np.linspace(T[0], T[-1], 512)
    g = diff(tt)
    roots = []
    sign = np.sign(g)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        roots.append(float(brentq(diff, tt[i], tt[i + 1])))
    for i in np.flatnonzero(sign == 0):
        roots.append(float(tt[i]))
    out = []
    dd = diff.derivative()
    for r in sorted(set(roots)):
        slope = abs(float(dd(r)))
        yerr = math.hypot(float(ea(r)), float(eb(r)))
        err = yerr / slope if slope > 0 else float(T[-1] - T[0])
        out.append((r, err))
    return out


def find_crossing(curves: dict[int, XiCurve], p: float = float("nan"),
                  agreement_sigma: float = 2.0) -> CrossingResult:
    """Crossing verdict from all size pairs of xi/L curves on a common T grid."""
    sizes = sorted(curves)
    if len(sizes) < 2:
        return CrossingResult(p=p, verdict=INCONCLUSIVE, note="need at least 2 sizes")
    base_t = curves[sizes[0]].temperatures
    for L in sizes[1:]:
        if not np.allclose(curves[L].temperatures, base_t):
            raise ValueError("curves must share a common temperature grid")

    all_candidates = []
    per_pair = []
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            cands = _pair_crossings(curves[sizes[a]], curves[sizes[b]])
            per_pair.append(((sizes[a], sizes[b]), cands))
            all_candidates.extend(t for t, _ in cands)

    if not all_candidates:
        return CrossingResult(p=p, verdict=NO_CROSSING,
                              note="xi/L ordering is monotone in L over the window")
    if any(not cands for _, cands in per_pair):
        return CrossingResult(p=p, verdict=INCONCLUSIVE,
                              note="only some size pairs intersect")

    center = float(np.median(all_candidates))
    pairs = []
    for (la, lb), cands in per_pair:
        t, e = min(cands, key=lambda ce: abs(ce[0] - center))
        pairs.append(PairCrossing(l_small=la, l_large=lb, t_cross=t, err=e))

    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            tol = agreement_sigma * math.hypot(pairs[i].err, pairs[j].err)
            if abs(pairs[i].t_cross - pairs[j].t_cross) > max(tol, 1e-12):
                return CrossingResult(p=p, verdict=INCONCLUSIVE, pairs=pairs,
                                      note="pair crossings disagree beyond errors")

    w = np.array([1.0 / max(c.err, 1e-12) ** 2 for c in pairs])
    ts = np.array([c.t_cross for c in pairs])
    t_c = float((w * ts).sum() / w.sum())
    t_c_err = float(max(1.0 / math.sqrt(w.sum()), ts.std()))
    return CrossingResult(p=p, verdict=CROSSING, t_c=t_c, t_c_err=t_c_err, pairs=pairs)


@dataclass
class ThresholdEstimate:
    p_c: float
    err: float  # half bracket width
    bracket: tuple[float, float]
    grid: list[float]
    verdicts: dict[float, str]


def threshold_scan(results: list[CrossingResult]) -> ThresholdEstimate:
    """Bracket the threshold between crossing and no-crossing verdicts."""
    grid = sorted(r.p for r in results)
    verdicts = {r.p: r.verdict for r in results}
    crossing_ps = [r.p for r in results if r.verdict == CROSSING]
    none_ps = [r.p for r in results if r.verdict == NO_CROSSING]
    if not crossing_ps or not none_ps:
        raise UnbracketedThresholdError(
            f"verdicts do not bracket a threshold: {verdicts}; extend the p grid"
        )
    lo = max(crossing_ps)
    hi = min(p for p in none_ps if p > lo) if any(p > lo for p in none_ps) else None
    if hi is None:
        raise UnbracketedThresholdError(
            f"no-crossing verdicts all below the largest crossing p: {verdicts}"
        )
    return ThresholdEstimate(p_c=0.5 * (lo + hi), err=0.5 * (hi - lo),
                             bracket=(lo, hi), grid=grid, verdicts=verdicts)


def domain_wall_delta(bonds: BondDisorder, beta: float,
                      direction: str = "vertical") -> float:
    """Free-energy cost log Z - log Z_wall of one inserted domain wall (L <= 2)."""
    return (enumerate_partition_function(bonds, beta)
            - enumerate_partition_function(insert_domain_wall(bonds, direction), beta))


def xi_table_rows(p: float, curves: dict[int, XiCurve]):
    """Plot-ready rows (p, L, T, xi_over_L, err, chi0, chik, n_samples)."""
    rows = []
    for L in sorted(curves):
        c = curves[L]
        for i, t in enumerate(c.temperatures):
            rows.append((p, L, float(t), c.xi_over_l[i], c.err[i],
                         c.chi0[i], c.chik[i], c.n_samples))
    return rows
