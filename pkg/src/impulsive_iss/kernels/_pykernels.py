"""Pure-Python implementation of the numerical kernels.

Every function here has a twin with the same signature and semantics in
``_ckernels.pyx``.  Keep the two in lockstep; ``tests/test_kernels.py``
runs both against the same inputs.
"""
import math

import numpy as np

BACKEND = "python"

# opcodes shared with the compiled backend and impulsive_iss.bytecode
OP_CONST = 0
OP_STATE = 1
OP_DELAY = 2
OP_INPUT = 3
OP_NEG = 4
OP_ADD = 5
OP_SUB = 6
OP_MUL = 7
OP_DIV = 8
OP_POW = 9
OP_SQRT = 10
OP_ABS = 11
OP_SIGN = 12
OP_EXP = 13
OP_LN = 14
OP_SIN = 15
OP_COS = 16
OP_MIN = 17
OP_MAX = 18

# status codes
OK = 0
ERR_DIV_ZERO = 1
ERR_SQRT_NEG = 2
ERR_LN_DOMAIN = 3
ERR_POW_DOMAIN = 4
ERR_HISTORY = 5
ERR_BAD_OP = 6

_END_TOL = 1e-12


class Program:
    """Flattened stack programs, one per state component."""

    def __init__(self, ops, iarg, farg, starts, max_stack):
        self.ops = [int(v) for v in ops]
        self.iarg = [int(v) for v in iarg]
        self.farg = [float(v) for v in farg]
        self.starts = [int(v) for v in starts]
        self.n_out = len(self.starts) - 1
        self.max_stack = int(max_stack)


def make_program(ops, iarg, farg, starts, max_stack):
    return Program(ops, iarg, farg, starts, max_stack)


def _locate(T, n, q, left):
    """Interval index ``i`` with the query inside [T[i], T[i+1]].

    Returns -1 for out-of-range queries and ``-2 - i`` for a query that
    should return row ``i`` verbatim.
    """
    tol = _END_TOL * max(1.0, abs(q))
    last = T[n - 1]
    if q > last:
        return -2 - (n - 1) if q - last <= tol else -1
    if q < T[0]:
        return -2 if T[0] - q <= tol else -1
    if left:
        i = int(np.searchsorted(T[:n], q, side="left"))
        if i == 0:
            return -2
        return i - 1
    i = int(np.searchsorted(T[:n], q, side="right")) - 1
    if i >= n - 1:
        return -2 - (n - 1)
    return i


def _hermite(T, X, DX, i, q, col):
    t0 = T[i]
    t1 = T[i + 1]
    h = t1 - t0
    s = (q - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return (h00 * X[i, col] + h10 * h * DX[i, col]
            + h01 * X[i + 1, col] + h11 * h * DX[i + 1, col])


def hermite_eval(T, X, DX, n, q, left, out):
    """Evaluate every column of the stored history at time ``q``."""
    i = _locate(T, n, q, left)
    if i == -1:
        return ERR_HISTORY
    if i < -1:
        out[:] = X[-2 - i]
        return OK
    for col in range(X.shape[1]):
        out[col] = _hermite(T, X, DX, i, q, col)
    return OK


def _history_at(T, X, DX, n, q, col):
    i = _locate(T, n, q, False)
    if i == -1:
        return None
    if i < -1:
        return X[-2 - i, col]
    return _hermite(T, X, DX, i, q, col)


class _VmFault(Exception):
    def __init__(self, code, pc):
        self.code = code
        self.pc = pc


def _run(prog, k, T, X, DX, n, t, state, u):
    ops = prog.ops
    iarg = prog.iarg
    farg = prog.farg
    stack = []
    push = stack.append
    pop = stack.pop
    for pc in range(prog.starts[k], prog.starts[k + 1]):
        op = ops[pc]
        if op == OP_CONST:
            push(farg[pc])
        elif op == OP_STATE:
            push(state[iarg[pc]])
        elif op == OP_DELAY:
            v = _history_at(T, X, DX, n, t - farg[pc], iarg[pc])
            if v is None:
                raise _VmFault(ERR_HISTORY, pc)
            push(v)
        elif op == OP_INPUT:
            push(u[iarg[pc]])
        elif op == OP_NEG:
            push(-pop())
        elif op <= OP_POW:
            b = pop()
            a = pop()
            if op == OP_ADD:
                push(a + b)
            elif op == OP_SUB:
                push(a - b)
            elif op == OP_MUL:
                push(a * b)
            elif op == OP_DIV:
                if b == 0.0:
                    raise _VmFault(ERR_DIV_ZERO, pc)
                push(a / b)
            else:
                push(_pow(a, b, pc))
        elif op <= OP_COS:
            a = pop()
            if op == OP_SQRT:
                if a < 0.0:
                    raise _VmFault(ERR_SQRT_NEG, pc)
                push(math.sqrt(a))
            elif op == OP_ABS:
                push(abs(a))
            elif op == OP_SIGN:
                push(1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0))
            elif op == OP_EXP:
                try:
                    push(math.exp(a))
                except OverflowError:
                    push(math.inf)
            elif op == OP_LN:
                if a <= 0.0:
                    raise _VmFault(ERR_LN_DOMAIN, pc)
                push(math.log(a))
            elif op == OP_SIN:
                push(math.sin(a))
            else:
                push(math.cos(a))
        elif op == OP_MIN:
            b = pop()
            a = pop()
            push(a if a <= b else b)
        elif op == OP_MAX:
            b = pop()
            a = pop()
            push(a if a >= b else b)
        else:
            raise _VmFault(ERR_BAD_OP, pc)
    return stack[-1]


def _pow(a, b, pc):
    if a == 0.0 and b < 0.0:
        raise _VmFault(ERR_POW_DOMAIN, pc)
    if a < 0.0 and b != math.floor(b):
        raise _VmFault(ERR_POW_DOMAIN, pc)
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0.0 and math.fmod(b, 2.0) != 0.0:
            return -math.inf
        return math.inf


def eval_system(prog, T, X, DX, n, t, state, u, out):
    """Evaluate all programs at time ``t``; returns ``(status, pc)``."""
    try:
        for k in range(prog.n_out):
            out[k] = _run(prog, k, T, X, DX, n, t, state, u)
    except _VmFault as fault:
        return fault.code, fault.pc
    return OK, -1


def rk4_step(prog, T, X, DX, n, t, h, U3, out):
    """One classical RK4 step from row ``n - 1`` of the history buffer.

    Fills ``DX[n - 1]`` with the first stage slope so that later delayed
    reads see a complete Hermite interval.  ``U3`` holds the input values
    at ``t``, ``t + h/2`` and ``t + h``.
    """
    m = prog.n_out
    x = X[n - 1].tolist()
    u0, u1, u2 = U3[0].tolist(), U3[1].tolist(), U3[2].tolist()
    k1 = [0.0] * m
    k2 = [0.0] * m
    k3 = [0.0] * m
    k4 = [0.0] * m
    status, pc = eval_system(prog, T, X, DX, n, t, x, u0, k1)
    if status:
        return status, pc
    DX[n - 1, :] = k1
    half = 0.5 * h
    stage = [x[i] + half * k1[i] for i in range(m)]
    status, pc = eval_system(prog, T, X, DX, n, t + half, stage, u1, k2)
    if status:
        return status, pc
    stage = [x[i] + half * k2[i] for i in range(m)]
    status, pc = eval_system(prog, T, X, DX, n, t + half, stage, u1, k3)
    if status:
        return status, pc
    stage = [x[i] + h * k3[i] for i in range(m)]
    status, pc = eval_system(prog, T, X, DX, n, t + h, stage, u2, k4)
    if status:
        return status, pc
    sixth = h / 6.0
    for i in range(m):
        out[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return OK, -1


def _candidates(times, t0, horizon):
    """Ordered breakpoints of the dwell-time objective.

    Each entry is (time, count, at_impulse): count is the number of impulse
    times in (t0, time] for a right point and in (t0, time) for the left
    point t_k - 0; at_impulse marks the right point t_k itself.
    """
    pts = [(t0, 0, False)]
    for k in range(len(times)):
        pts.append((times[k], k, False))
        pts.append((times[k], k + 1, True))
    if len(times) == 0 or horizon > times[len(times) - 1]:
        pts.append((horizon, len(times), False))
    return pts


def adt_sweep(times, t0, horizon, c, d, lam):
    """Linear sweep for sup over breakpoint pairs of -d*N - (c-lam)*(t-s).

    The objective is F(t) - F(s) with F(p) = -d*N(p, t0) - (c-lam)*(p-t0),
    so the supremum is max over t of F(t) minus the running minimum of F.
    Returns ``(sup, i_s, i_t)`` with indices into the breakpoint list.
    """
    rate = c - lam
    pts = _candidates(times, t0, horizon)
    best = -math.inf
    best_s = best_t = 0
    low = math.inf
    low_i = 0
    for i, (tm, cnt, _) in enumerate(pts):
        f = -d * cnt - rate * (tm - t0)
        if f < low:
            low = f
            low_i = i
        if f - low > best:
            best = f - low
            best_s = low_i
            best_t = i
    return best, best_s, best_t


def adt_pairs(times, t0, horizon, c, d, lam, closed):
    """Exhaustive O(k^2) scan over breakpoint pairs.

    ``closed`` counts impulses in [s, t] instead of (s, t]: the count at s
    is then the number of impulses strictly before s.  At an impulse both
    s = t_k (which counts t_k) and the right limit s = t_k + 0 (which does
    not) are candidates.
    """
    rate = c - lam
    pts = _candidates(times, t0, horizon)
    best = -math.inf
    m = len(pts)
    for i in range(m):
        ts, cs, at_imp = pts[i]
        # in closed mode cs doubles as the count at the right limit t_k + 0
        cs_in = cs - 1 if closed and at_imp else cs
        for j in range(i, m):
            tt, ct, _ = pts[j]
            v = max(-d * (ct - cs), -d * (ct - cs_in)) - rate * (tt - ts)
            if v > best:
                best = v
    return best


def karp(W):
    """Karp's minimum mean cycle tables on a dense weight matrix.

    ``W[i, j]`` is the weight of edge i -> j, ``inf`` for an absent edge.
    Returns ``(min_mean, v_star, pred)`` where ``pred[k, v]`` is the
    predecessor of ``v`` on a minimum k-edge walk; ``min_mean`` is ``inf``
    when the graph has no cycle.
    """
    n = W.shape[0]
    inf = math.inf
    D = np.full((n + 1, n), inf)
    pred = np.full((n + 1, n), -1, dtype=np.int64)
    D[0, :] = 0.0
    for k in range(1, n + 1):
        for v in range(n):
            best = inf
            arg = -1
            for u in range(n):
                w = W[u, v]
                if w == inf or D[k - 1, u] == inf:
                    continue
                cand = D[k - 1, u] + w
                if cand < best:
                    best = cand
                    arg = u
            D[k, v] = best
            pred[k, v] = arg
    min_mean = inf
    v_star = -1
    for v in range(n):
        if D[n, v] == inf:
            continue
        worst = -inf
        for k in range(n):
            if D[k, v] == inf:
                continue
            val = (D[n, v] - D[k, v]) / (n - k)
            if val > worst:
                worst = val
        if worst < min_mean:
            min_mean = worst
            v_star = v
    return min_mean, v_star, pred
