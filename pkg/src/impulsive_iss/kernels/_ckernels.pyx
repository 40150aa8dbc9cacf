# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of ``_pykernels``; same signatures, same semantics."""
from libc.math cimport sqrt, fabs, exp, log, sin, cos, pow, floor, fmod, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np

BACKEND = "cython"

cdef enum:
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

cdef enum:
    ST_OK = 0
    ST_DIV_ZERO = 1
    ST_SQRT_NEG = 2
    ST_LN_DOMAIN = 3
    ST_POW_DOMAIN = 4
    ST_HISTORY = 5
    ST_BAD_OP = 6

OK = ST_OK
ERR_DIV_ZERO = ST_DIV_ZERO
ERR_SQRT_NEG = ST_SQRT_NEG
ERR_LN_DOMAIN = ST_LN_DOMAIN
ERR_POW_DOMAIN = ST_POW_DOMAIN
ERR_HISTORY = ST_HISTORY
ERR_BAD_OP = ST_BAD_OP

cdef double END_TOL = 1e-12


cdef class Program:
    cdef public int[::1] ops
    cdef public int[::1] iarg
    cdef public double[::1] farg
    cdef public int[::1] starts
    cdef public int n_out
    cdef public int max_stack

    def __init__(self, ops, iarg, farg, starts, max_stack):
        self.ops = np.ascontiguousarray(ops, dtype=np.int32)
        self.iarg = np.ascontiguousarray(iarg, dtype=np.int32)
        self.farg = np.ascontiguousarray(farg, dtype=np.float64)
        self.starts = np.ascontiguousarray(starts, dtype=np.int32)
        self.n_out = len(starts) - 1
        self.max_stack = max(1, int(max_stack))


def make_program(ops, iarg, farg, starts, max_stack):
    return Program(ops, iarg, farg, starts, max_stack)


cdef Py_ssize_t _search(const double[::1] T, Py_ssize_t n, double q, bint left) nogil:
    # left: first index with T[i] >= q; right: first index with T[i] > q
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if (T[mid] < q) if left else (T[mid] <= q):
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _locate(const double[::1] T, Py_ssize_t n, double q, bint left) nogil:
    cdef double tol = END_TOL * (fabs(q) if fabs(q) > 1.0 else 1.0)
    cdef double last = T[n - 1]
    cdef Py_ssize_t i
    if q > last:
        return -2 - (n - 1) if q - last <= tol else -1
    if q < T[0]:
        return -2 if T[0] - q <= tol else -1
    if left:
        i = _search(T, n, q, True)
        if i == 0:
            return -2
        return i - 1
    i = _search(T, n, q, False) - 1
    if i >= n - 1:
        return -2 - (n - 1)
    return i


cdef inline double _hermite(const double[::1] T, const double[:, :] X, const double[:, :] DX,
                            Py_ssize_t i, double q, Py_ssize_t col) nogil:
    cdef double t0 = T[i]
    cdef double t1 = T[i + 1]
    cdef double h = t1 - t0
    cdef double s = (q - t0) / h
    cdef double s2 = s * s
    cdef double s3 = s2 * s
    cdef double h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    cdef double h10 = s3 - 2.0 * s2 + s
    cdef double h01 = -2.0 * s3 + 3.0 * s2
    cdef double h11 = s3 - s2
    return (h00 * X[i, col] + h10 * h * DX[i, col]
            + h01 * X[i + 1, col] + h11 * h * DX[i + 1, col])


def hermite_eval(const double[::1] T, const double[:, :] X, const double[:, :] DX,
                 Py_ssize_t n, double q, bint left, double[::1] out):
    cdef Py_ssize_t i = _locate(T, n, q, left)
    cdef Py_ssize_t col
    if i == -1:
        return ST_HISTORY
    if i < -1:
        for col in range(X.shape[1]):
            out[col] = X[-2 - i, col]
        return ST_OK
    for col in range(X.shape[1]):
        out[col] = _hermite(T, X, DX, i, q, col)
    return ST_OK


cdef int _run(Program prog, int k, const double[::1] T, const double[:, :] X,
              const double[:, :] DX, Py_ssize_t n, double t, const double* state,
              const double* u, double* stack, double* result, int* fault_pc) nogil:
    cdef int sp = 0
    cdef int pc, op
    cdef Py_ssize_t loc
    cdef double a, b, q
    for pc in range(prog.starts[k], prog.starts[k + 1]):
        op = prog.ops[pc]
        if op == OP_CONST:
            stack[sp] = prog.farg[pc]
            sp += 1
        elif op == OP_STATE:
            stack[sp] = state[prog.iarg[pc]]
            sp += 1
        elif op == OP_DELAY:
            q = t - prog.farg[pc]
            loc = _locate(T, n, q, False)
            if loc == -1:
                fault_pc[0] = pc
                return ST_HISTORY
            if loc < -1:
                stack[sp] = X[-2 - loc, prog.iarg[pc]]
            else:
                stack[sp] = _hermite(T, X, DX, loc, q, prog.iarg[pc])
            sp += 1
        elif op == OP_INPUT:
            stack[sp] = u[prog.iarg[pc]]
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op <= OP_POW:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            if op == OP_ADD:
                stack[sp - 1] = a + b
            elif op == OP_SUB:
                stack[sp - 1] = a - b
            elif op == OP_MUL:
                stack[sp - 1] = a * b
            elif op == OP_DIV:
                if b == 0.0:
                    fault_pc[0] = pc
                    return ST_DIV_ZERO
                stack[sp - 1] = a / b
            else:
                if (a == 0.0 and b < 0.0) or (a < 0.0 and b != floor(b)):
                    fault_pc[0] = pc
                    return ST_POW_DOMAIN
                stack[sp - 1] = pow(a, b)
        elif op <= OP_COS:
            a = stack[sp - 1]
            if op == OP_SQRT:
                if a < 0.0:
                    fault_pc[0] = pc
                    return ST_SQRT_NEG
                stack[sp - 1] = sqrt(a)
            elif op == OP_ABS:
                stack[sp - 1] = fabs(a)
            elif op == OP_SIGN:
                stack[sp - 1] = 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)
            elif op == OP_EXP:
                stack[sp - 1] = exp(a)
            elif op == OP_LN:
                if a <= 0.0:
                    fault_pc[0] = pc
                    return ST_LN_DOMAIN
                stack[sp - 1] = log(a)
            elif op == OP_SIN:
                stack[sp - 1] = sin(a)
            else:
                stack[sp - 1] = cos(a)
        elif op == OP_MIN:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            stack[sp - 1] = a if a <= b else b
        elif op == OP_MAX:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
            stack[sp - 1] = a if a >= b else b
        else:
            fault_pc[0] = pc
            return ST_BAD_OP
    result[0] = stack[sp - 1]
    return ST_OK


cdef int _eval_all(Program prog, const double[::1] T, const double[:, :] X,
                   const double[:, :] DX, Py_ssize_t n, double t, const double* state,
                   const double* u, double* stack, double* out, int* fault_pc) nogil:
    cdef int k, status
    for k in range(prog.n_out):
        status = _run(prog, k, T, X, DX, n, t, state, u, stack, &out[k], fault_pc)
        if status != ST_OK:
            return status
    return ST_OK


def eval_system(Program prog, const double[::1] T, const double[:, :] X, const double[:, :] DX,
                Py_ssize_t n, double t, state, u, double[::1] out):
    cdef const double[::1] s = np.ascontiguousarray(state, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double* stack = <double*> malloc(prog.max_stack * sizeof(double))
    cdef int pc = -1
    cdef int status
    cdef double dummy = 0.0
    cdef const double* up = &uv[0] if uv.shape[0] > 0 else &dummy
    try:
        status = _eval_all(prog, T, X, DX, n, t, &s[0], up, stack, &out[0], &pc)
    finally:
        free(stack)
    return status, pc


def rk4_step(Program prog, const double[::1] T, const double[:, :] X, double[:, :] DX,
             Py_ssize_t n, double t, double h, const double[:, ::1] U3, double[::1] out):
    cdef int m = prog.n_out
    cdef double* buf = <double*> malloc((6 * m + prog.max_stack) * sizeof(double))
    cdef double* x = buf
    cdef double* k1 = buf + m
    cdef double* k2 = buf + 2 * m
    cdef double* k3 = buf + 3 * m
    cdef double* k4 = buf + 4 * m
    cdef double* stage = buf + 5 * m
    cdef double* stack = buf + 6 * m
    cdef int i, status
    cdef int pc = -1
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef double dummy[3]
    cdef const double* u0
    cdef const double* u1
    cdef const double* u2
    if U3.shape[1] > 0:
        u0 = &U3[0, 0]
        u1 = &U3[1, 0]
        u2 = &U3[2, 0]
    else:
        u0 = u1 = u2 = dummy
    try:
        with nogil:
            for i in range(m):
                x[i] = X[n - 1, i]
            status = _eval_all(prog, T, X, DX, n, t, x, u0, stack, k1, &pc)
            if status == ST_OK:
                for i in range(m):
                    DX[n - 1, i] = k1[i]
                for i in range(m):
                    stage[i] = x[i] + half * k1[i]
                status = _eval_all(prog, T, X, DX, n, t + half, stage, u1, stack, k2, &pc)
            if status == ST_OK:
                for i in range(m):
                    stage[i] = x[i] + half * k2[i]
                status = _eval_all(prog, T, X, DX, n, t + half, stage, u1, stack, k3, &pc)
            if status == ST_OK:
                for i in range(m):
                    stage[i] = x[i] + h * k3[i]
                status = _eval_all(prog, T, X, DX, n, t + h, stage, u2, stack, k4, &pc)
            if status == ST_OK:
                for i in range(m):
                    out[i] = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    finally:
        free(buf)
    return status, pc


cdef Py_ssize_t _fill_candidates(const double[::1] times, double t0, double horizon,
                                 double* ct, double* cn, char* imp):
    cdef Py_ssize_t K = times.shape[0]
    cdef Py_ssize_t m = 1, k
    ct[0] = t0
    cn[0] = 0.0
    imp[0] = 0
    for k in range(K):
        ct[m] = times[k]
        cn[m] = k
        imp[m] = 0
        m += 1
        ct[m] = times[k]
        cn[m] = k + 1
        imp[m] = 1
        m += 1
    if K == 0 or horizon > times[K - 1]:
        ct[m] = horizon
        cn[m] = K
        imp[m] = 0
        m += 1
    return m


def adt_sweep(times, double t0, double horizon, double c, double d, double lam):
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t cap = 2 * tv.shape[0] + 2
    cdef double* ct = <double*> malloc(cap * sizeof(double))
    cdef double* cn = <double*> malloc(cap * sizeof(double))
    cdef char* imp = <char*> malloc(cap * sizeof(char))
    cdef double rate = c - lam
    cdef double best = -INFINITY, low = INFINITY, f
    cdef Py_ssize_t best_s = 0, best_t = 0, low_i = 0, i, m
    try:
        m = _fill_candidates(tv, t0, horizon, ct, cn, imp)
        for i in range(m):
            f = -d * cn[i] - rate * (ct[i] - t0)
            if f < low:
                low = f
                low_i = i
            if f - low > best:
                best = f - low
                best_s = low_i
                best_t = i
    finally:
        free(ct)
        free(cn)
        free(imp)
    return best, best_s, best_t


def adt_pairs(times, double t0, double horizon, double c, double d, double lam, bint closed):
    cdef const double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t cap = 2 * tv.shape[0] + 2
    cdef double* ct = <double*> malloc(cap * sizeof(double))
    cdef double* cn = <double*> malloc(cap * sizeof(double))
    cdef char* imp = <char*> malloc(cap * sizeof(char))
    cdef double rate = c - lam
    cdef double best = -INFINITY, v, w, ts, cs, cs_in
    cdef Py_ssize_t i, j, m
    try:
        m = _fill_candidates(tv, t0, horizon, ct, cn, imp)
        with nogil:
            for i in range(m):
                ts = ct[i]
                cs = cn[i]
                # in closed mode cs doubles as the count at the right limit t_k + 0
                cs_in = cs - 1.0 if closed and imp[i] else cs
                for j in range(i, m):
                    v = -d * (cn[j] - cs)
                    w = -d * (cn[j] - cs_in)
                    if w > v:
                        v = w
                    v -= rate * (ct[j] - ts)
                    if v > best:
                        best = v
    finally:
        free(ct)
        free(cn)
        free(imp)
    return best


def karp(W_in):
    cdef const double[:, ::1] W = np.ascontiguousarray(W_in, dtype=np.float64)
    cdef Py_ssize_t n = W.shape[0]
    D_arr = np.full((n + 1, n), np.inf)
    pred_arr = np.full((n + 1, n), -1, dtype=np.int64)
    cdef double[:, ::1] D = D_arr
    cdef long long[:, ::1] pred = pred_arr
    cdef Py_ssize_t k, v, u, arg
    cdef double best, w, cand, worst, val
    cdef double min_mean = INFINITY
    cdef Py_ssize_t v_star = -1
    for v in range(n):
        D[0, v] = 0.0
    for k in range(1, n + 1):
        for v in range(n):
            best = INFINITY
            arg = -1
            for u in range(n):
                w = W[u, v]
                if w == INFINITY or D[k - 1, u] == INFINITY:
                    continue
                cand = D[k - 1, u] + w
                if cand < best:
                    best = cand
                    arg = u
            D[k, v] = best
            pred[k, v] = arg
    for v in range(n):
        if D[n, v] == INFINITY:
            continue
        worst = -INFINITY
        for k in range(n):
            if D[k, v] == INFINITY:
                continue
            val = (D[n, v] - D[k, v]) / (n - k)
            if val > worst:
                worst = val
        if worst < min_mean:
            min_mean = worst
            v_star = v
    return min_mean, v_star, pred_arr
