"""Shared numeric vocabulary: block states, comparison functions, histories
and trajectories.

Conventions
-----------
Signals are right-continuous.  Wherever a jump happens at time ``t_k`` the
stored sample arrays carry two rows with the same time: first the left
limit ``x(t_k-)``, then the post-jump value ``x(t_k)``.  Between rows the
signal is reconstructed by cubic Hermite interpolation from the stored
values and slopes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DomainError, RangeError


# ---------------------------------------------------------------- blocks


@dataclass(frozen=True)
class BlockVector:
    """A state vector split into subsystem blocks of fixed dimension."""

    values: np.ndarray
    dims: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d <= 0 for d in dims):
            raise DomainError("block dimensions must be positive")
        if sum(dims) != values.size:
            raise DomainError(f"block dimensions {dims} do not add up to {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_blocks(cls, blocks):
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]
        return cls(np.concatenate(blocks), tuple(b.size for b in blocks))

    @property
    def blocks(self):
        out = []
        start = 0
        for d in self.dims:
            out.append(self.values[start:start + d])
            start += d
        return out

    def block(self, i):
        return self.blocks[i]

    def __len__(self):
        return self.values.size

    def norm(self):
        return float(np.linalg.norm(self.values))


def as_vector(x) -> np.ndarray:
    if isinstance(x, BlockVector):
        return np.array(x.values)
    return np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1).copy()


# ------------------------------------------------------- rates, K functions


@dataclass(frozen=True)
class RateCoeffs:
    """Flow rate ``c`` (1/time) and jump rate ``d`` (log factor)."""

    c: float
    d: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and math.isfinite(self.d)):
            raise DomainError("rate coefficients must be finite")


_KINDS = ("linear", "power", "tabulated")


@dataclass(frozen=True)
class KFunction:
    """Comparison function from a closed family.

    ``linear``: ``slope * r``; ``power``: ``coefficient * r**exponent``;
    ``tabulated``: piecewise linear through monotone knots starting at the
    origin, either held constant past the last knot (bounded) or extended
    with the final slope.
    A zero slope/coefficient gives the zero function, which is allowed as
    a gain but is not invertible.
    """

    kind: str
    params: tuple = ()
    knots_x: tuple = ()
    knots_y: tuple = ()
    extend: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown comparison function kind {self.kind!r}")
        if self.kind == "linear":
            (slope,) = self.params
            if not (slope >= 0 and math.isfinite(slope)):
                raise DomainError("linear slope must be finite and nonnegative")
        elif self.kind == "power":
            coef, expo = self.params
            if not (coef >= 0 and expo > 0 and math.isfinite(coef) and math.isfinite(expo)):
                raise DomainError("power function needs coefficient >= 0 and exponent > 0")
        else:
            xs = np.asarray(self.knots_x, dtype=float)
            ys = np.asarray(self.knots_y, dtype=float)
            if xs.size < 2 or xs.size != ys.size:
                raise DomainError("tabulated function needs at least two knots")
            if xs[0] != 0.0 or ys[0] != 0.0:
                raise DomainError("tabulated function must start at the origin")
            if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
                raise DomainError("tabulated knots must be strictly increasing")

    # constructors
    @classmethod
    def linear(cls, slope):
        return cls("linear", (float(slope),))

    @classmethod
    def identity(cls):
        return cls.linear(1.0)

    @classmethod
    def zero(cls):
        return cls.linear(0.0)

    @classmethod
    def power(cls, coefficient, exponent):
        return cls("power", (float(coefficient), float(exponent)))

    @classmethod
    def tabulated(cls, xs, ys, extend=False):
        return cls("tabulated", (), tuple(float(v) for v in xs),
                   tuple(float(v) for v in ys), bool(extend))

    @property
    def is_zero(self):
        return self.kind in ("linear", "power") and self.params[0] == 0.0

    @property
    def unbounded(self):
        if self.kind == "tabulated":
            return self.extend
        return not self.is_zero

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("comparison functions are defined on [0, inf)")
        if self.kind == "linear":
            out = self.params[0] * r
        elif self.kind == "power":
            out = self.params[0] * r ** self.params[1]
        else:
            xs = np.asarray(self.knots_x)
            ys = np.asarray(self.knots_y)
            out = np.interp(r, xs, ys)
            if self.extend:
                slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
                out = np.where(r > xs[-1], ys[-1] + slope * (r - xs[-1]), out)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor):
        """``factor * f`` for a nonnegative factor."""
        factor = float(factor)
        if self.kind == "linear":
            return KFunction.linear(self.params[0] * factor)
        if self.kind == "power":
            return KFunction.power(self.params[0] * factor, self.params[1])
        return KFunction.tabulated(self.knots_x, [y * factor for y in self.knots_y], self.extend)

    def inverse(self, y):
        """Closed-form inverse where available, bisection otherwise."""
        if self.kind == "linear" and self.params[0] > 0:
            if y < 0:
                raise DomainError("inverse needs y >= 0")
            return y / self.params[0]
        if self.kind == "power" and self.params[0] > 0:
            if y < 0:
                raise DomainError("inverse needs y >= 0")
            return (y / self.params[0]) ** (1.0 / self.params[1])
        return invert_k(self, y)

    def inverse_many(self, y):
        """Vectorized inverse on an array of values."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("inverse needs y >= 0")
        if self.kind == "linear" and self.params[0] > 0:
            return y / self.params[0]
        if self.kind == "power" and self.params[0] > 0:
            return (y / self.params[0]) ** (1.0 / self.params[1])
        if self.kind == "tabulated":
            xs = np.asarray(self.knots_x)
            ys = np.asarray(self.knots_y)
            if not self.extend and np.any(y > ys[-1]):
                raise RangeError(f"tabulated function is bounded by {ys[-1]!r}")
            out = np.interp(y, ys, xs)
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            return np.where(y > ys[-1], xs[-1] + (y - ys[-1]) / slope, out)
        return np.array([invert_k(self, v) for v in y.ravel()]).reshape(y.shape)

    def spec(self):
        """Text form understood by :func:`parse_kfunction`."""
        if self.kind == "linear":
            return f"linear:{self.params[0]!r}"
        if self.kind == "power":
            return f"power:{self.params[0]!r}:{self.params[1]!r}"
        pairs = ",".join(f"{x!r}:{y!r}" for x, y in zip(self.knots_x, self.knots_y))
        return ("tabulated+:" if self.extend else "tabulated:") + pairs


def parse_kfunction(text: str) -> KFunction:
    """Parse ``id``, ``zero``, ``linear:a``, ``power:k:p`` or
    ``tabulated:x0:y0,x1:y1,...`` (``tabulated+`` extends linearly)."""
    text = text.strip()
    if text in ("id", "identity"):
        return KFunction.identity()
    if text in ("zero", "0"):
        return KFunction.zero()
    head, _, rest = text.partition(":")
    try:
        if head == "linear":
            return KFunction.linear(float(rest))
        if head == "power":
            k, p = rest.split(":")
            return KFunction.power(float(k), float(p))
        if head in ("tabulated", "tabulated+"):
            xs, ys = [], []
            for pair in rest.split(","):
                x, y = pair.split(":")
                xs.append(float(x))
                ys.append(float(y))
            return KFunction.tabulated(xs, ys, extend=head.endswith("+"))
    except ValueError as exc:
        raise DomainError(f"malformed comparison function {text!r}: {exc}") from None
    raise DomainError(f"unknown comparison function {text!r}")


def invert_k(f: KFunction, y: float) -> float:
    """Solve ``f(x) = y`` by bisection after growing the bracket.

    The returned ``x`` satisfies ``|f(x) - y| <= 1e-10 * max(1, y)``; the
    loop runs to a relative residual of ``1e-12`` so small values keep
    their relative accuracy too.
    """
    y = float(y)
    if y < 0 or not math.isfinite(y):
        raise DomainError(f"cannot invert at y={y!r}")
    if y == 0.0:
        return 0.0
    tol = min(1e-10 * max(1.0, y), 1e-12 * y)
    lo, hi = 0.0, 1.0
    while f(hi) < y:
        if f.kind == "tabulated" and not f.extend and hi >= f.knots_x[-1]:
            raise RangeError(f"tabulated function is bounded by {f.knots_y[-1]!r} < {y!r}")
        if f.is_zero or hi > 1e300:
            raise RangeError(f"value {y!r} is not attained")
        lo, hi = hi, hi * 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - y) <= tol:
            return mid
        if fm < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * hi:
            break
    return 0.5 * (lo + hi)


# ----------------------------------------------------------- histories


@dataclass(frozen=True)
class HistorySegment:
    """Stored samples on the window ``[t_end - theta, t_end]``.

    ``t`` is nondecreasing; a repeated time marks a jump (left limit row
    first).  ``dx`` holds the slopes used for Hermite reconstruction.
    """

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    theta: float
    t_end: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        x = np.ascontiguousarray(np.atleast_2d(self.x), dtype=float)
        dx = np.ascontiguousarray(np.atleast_2d(self.dx), dtype=float)
        if x.shape[0] != t.size or dx.shape != x.shape:
            raise DomainError("history arrays have inconsistent shapes")
        if t.size == 0:
            raise DomainError("history needs at least one sample")
        if np.any(np.diff(t) < 0):
            raise DomainError("history times must be nondecreasing")
        if self.theta < 0:
            raise DomainError("theta must be nonnegative")
        for a in (t, x, dx):
            a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "t_end", float(self.t_end))

    @classmethod
    def constant(cls, value, theta, t_end=0.0):
        value = as_vector(value)
        if theta > 0:
            t = np.array([t_end - theta, t_end])
        else:
            t = np.array([t_end])
        x = np.tile(value, (t.size, 1))
        return cls(t, x, np.zeros_like(x), theta, t_end)

    @classmethod
    def from_function(cls, xi, theta, t_end=0.0, step=None):
        """Sample an initial-history function ``xi(s)``, ``s`` in [-theta, 0].

        Slopes come from second-order finite differences of the samples.
        """
        if theta <= 0:
            v = as_vector(xi(0.0))
            return cls(np.array([t_end]), v[None, :], np.zeros((1, v.size)), 0.0, t_end)
        step = step or theta / 64
        m = max(3, int(math.ceil(theta / step - 1e-9)) + 1)
        taus = np.linspace(-theta, 0.0, m)
        x = np.array([as_vector(xi(float(s))) for s in taus])
        dx = np.gradient(x, taus, axis=0, edge_order=2)
        return cls(taus + t_end, x, dx, theta, t_end)

    @property
    def dim(self):
        return self.x.shape[1]

    def value_at(self, time, left=False):
        """State at an absolute ``time`` (left limit if ``left``)."""
        if time < self.t_end - self.theta - 1e-12 * max(1.0, abs(time)) or \
                time > self.t_end + 1e-12 * max(1.0, abs(time)):
            raise DomainError(f"time {time!r} outside history span "
                              f"[{self.t_end - self.theta!r}, {self.t_end!r}]")
        out = np.empty(self.dim)
        status = kernels.hermite_eval(self.t, self.x, self.dx, self.t.size, float(time), bool(left), out)
        if status != kernels.OK:
            raise DomainError(f"time {time!r} not covered by stored samples")
        return out

    def restricted(self, start, end=None):
        """Rows needed to evaluate on ``[start, end]`` (end defaults to t_end)."""
        end = self.t_end if end is None else end
        lo = max(0, int(np.searchsorted(self.t, start, side="right")) - 1)
        hi = int(np.searchsorted(self.t, end, side="right"))
        return self.t[lo:hi], self.x[lo:hi], self.dx[lo:hi]


def eval_history(seg: HistorySegment, tau: float, left: bool = False) -> np.ndarray:
    """``x(t_end + tau)`` for an offset ``tau`` in ``[-theta, 0]``.

    At a stored jump instant the right-continuous value is returned unless
    ``left`` asks for the left limit.
    """
    tol = 1e-12 * max(1.0, seg.theta)
    if tau > tol or tau < -seg.theta - tol:
        raise DomainError(f"offset {tau!r} outside [-{seg.theta!r}, 0]")
    return seg.value_at(seg.t_end + tau, left=left)


# ---------------------------------------------------------- trajectories


@dataclass(frozen=True)
class JumpEvent:
    time: float
    pre: np.ndarray
    post: np.ndarray


@dataclass
class Trajectory:
    """Sampled solution with explicit jump rows.

    ``t, x, dx`` hold every sample (jump instants appear twice, the left
    limit row flagged in ``is_left``); ``u`` holds the input at each row,
    its left limit on left rows.  ``versions`` lists ``(time, segment)``
    snapshots of the effective history window: the initial history at
    ``t0`` and, for whole-window jumps, the rewritten window after each
    impulse.
    """

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    is_left: np.ndarray
    u: np.ndarray
    events: list
    t0: float
    theta: float = 0.0
    state_names: tuple = ()
    input_names: tuple = ()
    block_dims: tuple = ()
    versions: list = field(default_factory=list)
    jump_kind: str = "point"

    def __post_init__(self):
        for name in ("t", "x", "dx", "is_left", "u"):
            getattr(self, name).setflags(write=False)

    @property
    def n_samples(self):
        return self.t.size

    @property
    def t_end(self):
        return float(self.t[-1])

    @property
    def initial_history(self) -> HistorySegment:
        return self.versions[0][1]

    def norms(self):
        return np.linalg.norm(self.x, axis=1)

    def value(self, time, left=False):
        if time < self.t0 or time > self.t_end + 1e-12 * max(1.0, abs(time)):
            raise DomainError(f"time {time!r} outside trajectory span")
        out = np.empty(self.x.shape[1])
        status = kernels.hermite_eval(self.t, self.x, self.dx, self.t.size, float(time), bool(left), out)
        if status != kernels.OK:
            raise DomainError(f"time {time!r} not covered")
        return out

    def _version_index(self, time, left):
        idx = 0
        for i, (tv, _) in enumerate(self.versions):
            if tv < time or (tv == time and not left):
                idx = i
        return idx

    def window(self, time, left=False) -> HistorySegment:
        """Effective history segment ``x^t`` (``(x^t)^-`` if ``left``)."""
        tv, seg = self.versions[self._version_index(time, left)]
        start = time - self.theta
        vt, vx, vdx = seg.restricted(start, min(tv, time))
        lo = int(np.searchsorted(self.t, tv, side="left"))
        if left:
            hi = int(np.searchsorted(self.t, time, side="left"))
            if hi < self.t.size and self.t[hi] == time and self.is_left[hi]:
                hi += 1
        else:
            hi = int(np.searchsorted(self.t, time, side="right"))
        # the left row at a rewrite instant belongs to the discarded window
        keep = ~(self.is_left[lo:hi] & (self.t[lo:hi] == tv))
        rt = self.t[lo:hi][keep]
        rx = self.x[lo:hi][keep]
        rdx = self.dx[lo:hi][keep]
        t = np.concatenate([vt, rt])
        x = np.vstack([vx, rx]) if rx.size else vx
        dx = np.vstack([vdx, rdx]) if rdx.size else vdx
        return HistorySegment(t, x, dx, self.theta, time)

    def to_csv(self, path):
        write_trajectory_csv(self, path)


def write_trajectory_csv(traj: Trajectory, path):
    """``t,x1,...,xN`` rows; jump instants appear twice (left then post)."""
    n = traj.x.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["t"] + [f"x{i + 1}" for i in range(n)]) + "\n")
        for tk, row in zip(traj.t, traj.x):
            fh.write(",".join([repr(float(tk))] + [repr(float(v)) for v in row]) + "\n")


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv`: ``(t, x)`` arrays."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows).reshape(-1, len(header))
    return data[:, 0], data[:, 1:]


def sup_norm(traj: Trajectory, window: Sequence[float]) -> float:
    """Supremum of the Euclidean norm of ``x`` over ``[a, b]``.

    Candidates are the samples in the window (left limits of interior
    jumps included), the interpolated endpoints and three interior points
    of every Hermite interval.
    """
    a, b = float(window[0]), float(window[1])
    if b < a:
        raise DomainError(f"empty window [{a!r}, {b!r}]")
    tol = 1e-12 * max(1.0, abs(b))
    if a < traj.t0 - tol or b > traj.t_end + tol:
        raise DomainError("window is not inside the trajectory span")
    t, x, dx = traj.t, traj.x, traj.dx
    best = max(np.linalg.norm(traj.value(a)), np.linalg.norm(traj.value(b)))
    inside = (t >= a) & (t <= b) & ~((t == a) & traj.is_left)
    if np.any(inside):
        best = max(best, float(np.max(np.linalg.norm(x[inside], axis=1))))
    i = np.nonzero((t[:-1] >= a) & (t[1:] <= b) & (t[1:] > t[:-1]))[0]
    if i.size:
        h = (t[i + 1] - t[i])[:, None]
        for s in (0.25, 0.5, 0.75):
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            p = h00 * x[i] + h10 * h * dx[i] + h01 * x[i + 1] + h11 * h * dx[i + 1]
            best = max(best, float(np.max(np.linalg.norm(p, axis=1))))
    return float(best)
