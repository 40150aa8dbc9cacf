"""Impulse-time sequences and the average dwell-time condition.

For a sequence on ``[t0, T]`` and rates ``c, d, lam`` the condition reads

    -d * N(t, s) - (c - lam) * (t - s) <= mu   for all t0 <= s <= t <= T,

with ``N(t, s)`` the number of impulses in ``(s, t]``.

Why a finite candidate set suffices: for fixed counts the objective is
affine in ``s`` and in ``t``, and the counts are piecewise constant with
breaks only at impulse times.  On every open cell between breakpoints the
supremum is therefore approached at a cell end.  ``N(t, s)`` is right
continuous in ``t`` and left-continuous in ``s``, so the extreme values
are the limits ``t -> t_k`` with ``t_k`` counted or not (``t_k`` itself
and ``t_k - 0``) and likewise for ``s``.  Because ``N(t, t_k) = N(t, t_k-0)
- 1`` the two ``s`` limits are the same two counts.  All choices are
captured by the breakpoint list ``{t0} U {t_k - 0, t_k} U {T}`` with the
count ``N(p) = #{t_k <= p}`` (``#{t_k < p}`` for the left point).  The
objective is ``F(t) - F(s)`` with ``F(p) = -d N(p) - (c - lam)(p - t0)``,
hence the supremum over ordered pairs is a single running-minimum sweep.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import RateCoeffs
from .errors import DomainError, ResourceError

MAX_IMPULSES = 100_000


@dataclass(frozen=True)
class ImpulseSequence:
    """Strictly increasing impulse times in ``(t0, horizon]``.

    ``period`` is recorded for sequences generated as multiples of a
    fixed period and enables the unbounded-horizon rate test.
    """

    times: tuple
    t0: float = 0.0
    horizon: float = 1.0
    period: float | None = None

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not (math.isfinite(self.t0) and math.isfinite(self.horizon)):
            raise DomainError("t0 and horizon must be finite")
        if self.horizon < self.t0:
            raise DomainError("horizon must not precede t0")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise DomainError("impulse times must be strictly increasing")
        if times and (times[0] <= self.t0 or times[-1] > self.horizon):
            raise DomainError("impulse times must lie in (t0, horizon]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self):
        return len(self.times)

    def as_array(self):
        return np.array(self.times, dtype=float)

    @property
    def min_gap(self):
        """Smallest distance between consecutive impulses (``inf`` if < 2)."""
        if len(self.times) < 2:
            return math.inf
        return float(np.min(np.diff(self.as_array())))


@dataclass(frozen=True)
class DwellParams:
    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise DomainError("dwell parameters need mu > 0 and lambda > 0")


def count_impulses(seq: ImpulseSequence, s: float, t: float, mode: str = "semiopen") -> int:
    """Number of impulses in ``(s, t]`` (``semiopen``) or ``[s, t]`` (``closed``)."""
    if s > t:
        raise DomainError(f"s={s!r} exceeds t={t!r}")
    upto_t = bisect.bisect_right(seq.times, t)
    if mode == "semiopen":
        return upto_t - bisect.bisect_right(seq.times, s)
    if mode == "closed":
        return upto_t - bisect.bisect_left(seq.times, s)
    raise DomainError(f"unknown counting mode {mode!r}")


def _check_size(seq):
    if len(seq.times) > MAX_IMPULSES:
        raise ResourceError(f"{len(seq.times)} impulses exceed the cap of {MAX_IMPULSES}")


def adt_supremum(seq: ImpulseSequence, c: float, d: float, lam: float) -> float:
    """Exact ``sup -d N(t,s) - (c - lam)(t - s)`` over ``t0 <= s <= t <= horizon``."""
    _check_size(seq)
    sup, _, _ = kernels.adt_sweep(seq.as_array(), seq.t0, seq.horizon, c, d, lam)
    return float(sup)


def adt_worst_pair(seq: ImpulseSequence, c: float, d: float, lam: float):
    """``(sup, s, t, s_is_left_limit, t_is_left_limit)`` of the maximizing pair."""
    _check_size(seq)
    sup, i_s, i_t = kernels.adt_sweep(seq.as_array(), seq.t0, seq.horizon, c, d, lam)
    pts = _breakpoints(seq)
    return float(sup), pts[i_s][0], pts[i_t][0], pts[i_s][1], pts[i_t][1]


def _breakpoints(seq):
    pts = [(seq.t0, False)]
    for tk in seq.times:
        pts.append((tk, True))
        pts.append((tk, False))
    if not seq.times or seq.horizon > seq.times[-1]:
        pts.append((seq.horizon, False))
    return pts


def adt_supremum_pairs(seq: ImpulseSequence, c, d, lam, mode="semiopen") -> float:
    """Quadratic scan over all breakpoint pairs.

    With ``mode="closed"`` the count is taken over ``[s, t]``; the right
    limit ``t_k + 0`` then joins ``t_k`` as a candidate for ``s``.
    """
    _check_size(seq)
    return float(kernels.adt_pairs(seq.as_array(), seq.t0, seq.horizon, c, d, lam,
                                   mode == "closed"))


def adt_supremum_bruteforce(seq: ImpulseSequence, c, d, lam, mode="semiopen", eps=1e-9):
    """Pair scan through :func:`count_impulses` with explicit one-sided limits.

    Independent of the kernel code; used as a test oracle.
    """
    cand = [seq.t0, seq.horizon]
    for tk in seq.times:
        cand.extend([tk, tk - eps, tk + eps])
    cand = sorted(x for x in set(cand) if seq.t0 <= x <= seq.horizon)
    best = -math.inf
    for i, s in enumerate(cand):
        for t in cand[i:]:
            n = count_impulses(seq, s, t, mode)
            best = max(best, -d * n - (c - lam) * (t - s))
    return best


def adt_supremum_grid(seq: ImpulseSequence, c, d, lam, m=400):
    """Supremum over a uniform ``m``-point grid of (s, t) pairs."""
    grid = np.linspace(seq.t0, seq.horizon, m)
    times = seq.as_array()
    n_at = np.searchsorted(times, grid, side="right")
    f = -d * n_at - (c - lam) * (grid - seq.t0)
    lows = np.minimum.accumulate(f)
    return float(np.max(f - lows))


def periodic_rate_ok(period: float, c: float, d: float, lam: float) -> bool:
    """Per-period test ``d/period + (c - lam) >= 0``.

    Over many whole periods the objective grows like ``-(d/period + c -
    lam)`` per unit time, so this test is what keeps the supremum bounded
    on an unbounded horizon.
    """
    return d / period + (c - lam) >= -1e-12


def in_class(seq: ImpulseSequence, params: DwellParams, rates: RateCoeffs) -> bool:
    """Membership of ``seq`` in the dwell-time class for ``(mu, lam)``.

    For periodic sequences the per-period rate test must also pass.
    """
    ok = adt_supremum(seq, rates.c, rates.d, params.lam) <= params.mu
    if ok and seq.period is not None:
        ok = periodic_rate_ok(seq.period, rates.c, rates.d, params.lam)
    return ok


def in_class_mode(seq: ImpulseSequence, mu, c, d, lam, mode="semiopen") -> bool:
    """Membership evaluated with semiopen or closed counting."""
    return adt_supremum_pairs(seq, c, d, lam, mode) <= mu


# ------------------------------------------------------------- generation


def generate_sequence(kind: str, t0: float = 0.0, horizon: float = 1.0, *, period=None,
                      rate=None, seed=None, times=None) -> ImpulseSequence:
    """Periodic, Poisson or explicit impulse times in ``(t0, horizon]``."""
    if kind == "periodic":
        if period is None or not period > 0:
            raise DomainError("periodic sequences need a positive period")
        count = int(math.floor((horizon - t0) / period + 1e-9))
        ts = [t0 + k * period for k in range(1, count + 1)]
        ts = [t for t in ts if t <= horizon + 1e-12 * max(1.0, abs(horizon))]
        ts = [min(t, horizon) for t in ts]
        return ImpulseSequence(tuple(ts), t0, horizon, period=float(period))
    if kind == "poisson":
        if rate is None or not rate > 0:
            raise DomainError("poisson sequences need a positive rate")
        rng = np.random.default_rng(seed)
        ts = []
        t = t0
        while True:
            t += rng.exponential(1.0 / rate)
            if t > horizon:
                break
            if not ts or t > ts[-1]:
                ts.append(t)
            if len(ts) > MAX_IMPULSES:
                raise ResourceError("poisson sequence exceeds the impulse cap")
        return ImpulseSequence(tuple(ts), t0, horizon)
    if kind == "explicit":
        return ImpulseSequence(tuple(sorted(times or ())), t0, horizon)
    raise DomainError(f"unknown sequence kind {kind!r}")


def read_sequence_file(path):
    """One time per line; ``#`` starts a comment."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.append(float(line))
            except ValueError:
                raise DomainError(f"{path}:{lineno}: not a number: {line!r}") from None
    return out


def parse_impulse_spec(spec: str, t0: float = 0.0, horizon: float = 1.0,
                       seed=None) -> ImpulseSequence:
    """``periodic:P``, ``poisson:RATE[:seedN]`` or ``file:PATH``.

    A global ``seed`` is used for Poisson specs that carry none.
    """
    kind, _, rest = spec.partition(":")
    try:
        if kind == "periodic":
            return generate_sequence("periodic", t0, horizon, period=float(rest))
        if kind == "poisson":
            rate_s, _, seed_s = rest.partition(":")
            if seed_s:
                if not seed_s.startswith("seed"):
                    raise DomainError(f"bad seed field {seed_s!r}")
                seed = int(seed_s[4:])
            return generate_sequence("poisson", t0, horizon, rate=float(rate_s), seed=seed)
        if kind == "file":
            ts = [t for t in read_sequence_file(rest) if t0 < t <= horizon]
            return generate_sequence("explicit", t0, horizon, times=ts)
        if kind == "none":
            return ImpulseSequence((), t0, horizon)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed impulse spec {spec!r}: {exc}") from None
    raise DomainError(f"unknown impulse spec {spec!r}")
