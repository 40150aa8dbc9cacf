"""Max-algebra analysis of linear gain matrices.

The gain operator ``Gamma(s)_i = max_j gamma_ij s_j`` is max-linear.  For
such maps the role of the spectral radius is played by the largest
geometric mean of gains along a directed cycle: ``Gamma(s) < alpha * s``
has a positive solution exactly when every cycle mean is below ``alpha``.
Taking logarithms ``p = ln s`` turns the strict inequalities into
difference constraints ``p_i > p_j + ln gamma_ij - ln alpha``, which are
feasible iff the constraint graph has no nonnegative cycle.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError


@dataclass(frozen=True)
class GainMatrix:
    """Square nonnegative matrix of linear gains with zero diagonal.

    ``entries[i, j]`` is the gain from subsystem ``j`` into subsystem ``i``.
    """

    entries: np.ndarray

    def __post_init__(self):
        g = np.array(self.entries, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise DomainError("gain matrix must be square and nonempty")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise DomainError("gains must be finite and nonnegative")
        if np.any(np.diag(g) != 0):
            raise DomainError("gain matrix must have a zero diagonal")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def n(self):
        return self.entries.shape[0]

    def scaled(self, factor):
        return GainMatrix(self.entries * factor)

    def __getitem__(self, idx):
        return self.entries[idx]


def as_gain_matrix(g) -> GainMatrix:
    return g if isinstance(g, GainMatrix) else GainMatrix(g)


@dataclass(frozen=True)
class CycleReport:
    ok: bool
    worst_cycle: tuple  # node indices, first node not repeated
    worst_value: float  # product of gains along the worst cycle
    rho: float  # largest cycle geometric mean
    threshold: float = 1.0


def apply_gain(gamma, s) -> np.ndarray:
    gamma = as_gain_matrix(gamma)
    s = np.asarray(s, dtype=float)
    if s.shape != (gamma.n,):
        raise DomainError(f"vector of length {s.size} for a {gamma.n}x{gamma.n} matrix")
    if np.any(s < 0):
        raise DomainError("gain operator needs a nonnegative vector")
    return np.max(gamma.entries * s[None, :], axis=1)


def _log_weights(gamma):
    g = gamma.entries
    with np.errstate(divide="ignore"):
        w = np.where(g > 0, -np.log(np.where(g > 0, g, 1.0)), np.inf)
    return np.ascontiguousarray(w)


def cycle_product(gamma, cycle):
    """``gamma[k1, k2] * gamma[k2, k3] * ... * gamma[kp, k1]``."""
    g = as_gain_matrix(gamma).entries
    prod = 1.0
    for a, b in zip(cycle, tuple(cycle[1:]) + (cycle[0],)):
        prod *= g[a, b]
    return prod


def _extract_cycle(pred, v_star, n, gamma):
    """Best simple cycle on the minimum ``n``-edge walk ending at ``v_star``.

    The walk has ``n`` edges over ``n`` nodes so it repeats a node; every
    simple cycle cut out of it is a candidate and the one with the largest
    geometric mean is the maximizing cycle.
    """
    walk = [v_star]
    v = v_star
    for k in range(n, 0, -1):
        v = int(pred[k, v])
        walk.append(v)
    walk.reverse()  # walk[0] -> walk[1] -> ... -> walk[n] == v_star
    best, best_mean = None, -math.inf
    for i in range(len(walk)):
        for j in range(i + 1, len(walk)):
            if walk[j] == walk[i]:
                seg = walk[i:j]
                if len(set(seg)) != len(seg):
                    continue
                mean = cycle_product(gamma, seg) ** (1.0 / len(seg))
                if mean > best_mean:
                    best, best_mean = seg, mean
                break
    return _canonical(best)


def _canonical(cycle):
    k = cycle.index(min(cycle))
    return tuple(cycle[k:] + cycle[:k])


def max_cycle_mean(gamma) -> float:
    """Largest geometric mean of gains along a directed cycle (0 if acyclic).

    Karp's minimum mean cycle on ``-ln gamma``; zero gains are absent edges.
    """
    return worst_cycle(gamma)[2]


def worst_cycle(gamma):
    """``(cycle, product, mean)`` of the maximizing cycle, ``((), 0, 0)`` if none."""
    gamma = as_gain_matrix(gamma)
    # a cycle (k1, ..., kp) has product gamma[k1, k2] * ... * gamma[kp, k1]
    w = _log_weights(gamma)
    min_mean, v_star, pred = kernels.karp(w)
    if not math.isfinite(min_mean):
        return (), 0.0, 0.0
    cycle = _extract_cycle(np.asarray(pred), int(v_star), gamma.n, gamma)
    prod = cycle_product(gamma, cycle)
    prod = float(prod)
    return cycle, prod, prod ** (1.0 / len(cycle))


def cycle_condition(gamma, threshold: float = 1.0) -> CycleReport:
    """Every cycle product below ``threshold ** length`` (strict)."""
    if not threshold > 0:
        raise DomainError("threshold must be positive")
    cycle, prod, rho = worst_cycle(gamma)
    return CycleReport(bool(rho < threshold), cycle, float(prod), float(rho), float(threshold))


def check_smallgain(gamma) -> bool:
    """``Gamma(s) >= s`` has no nonzero solution, i.e. every cycle mean < 1."""
    return max_cycle_mean(gamma) < 1.0


def find_scaling_vector(gamma, alpha: float = 1.0):
    """Positive ``s`` with ``Gamma(s) < alpha * s`` componentwise, or ``None``.

    Longest paths for ``p_i >= p_j + ln gamma_ij - ln alpha + delta`` with
    slack ``delta = (ln alpha - ln rho) / 2`` (``1`` for acyclic matrices)
    give a point with margin ``delta`` in every constraint.  The result is
    normalized to ``max s = 1``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    gamma = as_gain_matrix(gamma)
    rho = max_cycle_mean(gamma)
    if rho >= alpha:
        return None
    delta = 1.0 if rho == 0.0 else 0.5 * (math.log(alpha) - math.log(rho))
    g = gamma.entries
    n = gamma.n
    edges = [(i, j, math.log(g[i, j]) - math.log(alpha) + delta)
             for i in range(n) for j in range(n) if g[i, j] > 0]
    p = np.zeros(n)
    # every cycle in the shifted graph has negative weight, so n - 1 rounds
    # of relaxation reach the longest-path fixed point
    for _ in range(n):
        changed = False
        for i, j, wij in edges:
            if p[j] + wij > p[i]:
                p[i] = p[j] + wij
                changed = True
        if not changed:
            break
    s = np.exp(p - p.max())
    if not np.all(apply_gain(gamma, s) < alpha * s):
        return None
    return s


def enumerate_simple_cycles(n):
    """Every simple cycle of the complete digraph on ``n`` nodes, listed
    once with its smallest node first."""
    for k in range(2, n + 1):
        for combo in itertools.combinations(range(n), k):
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                yield (first,) + perm


def brute_force_cycles(gamma):
    """``[(cycle, product, mean)]`` for all simple cycles with positive product."""
    gamma = as_gain_matrix(gamma)
    out = []
    for cyc in enumerate_simple_cycles(gamma.n):
        prod = cycle_product(gamma, cyc)
        if prod > 0:
            out.append((cyc, prod, prod ** (1.0 / len(cyc))))
    return out


def brute_force_max_cycle_mean(gamma):
    cycles = brute_force_cycles(gamma)
    return max((c[2] for c in cycles), default=0.0)


# ---------------------------------------------------------------- files


def read_gain_matrix(path) -> GainMatrix:
    """First line ``n``, then ``n`` rows of ``n`` whitespace separated decimals."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    try:
        n = int(lines[0])
        rows = [[float(v) for v in ln.split()] for ln in lines[1:1 + n]]
    except (ValueError, IndexError):
        raise DomainError(f"{path}: malformed gain matrix file") from None
    if len(rows) != n or any(len(r) != n for r in rows) or len(lines) != n + 1:
        raise DomainError(f"{path}: expected {n} rows of {n} entries")
    return GainMatrix(np.array(rows))


def write_gain_matrix(gamma, path, digits=None):
    g = as_gain_matrix(gamma).entries
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.shape[0]}\n")
        for row in g:
            if digits is None:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            else:
                fh.write(" ".join(f"{v:.{digits}f}" for v in row) + "\n")
