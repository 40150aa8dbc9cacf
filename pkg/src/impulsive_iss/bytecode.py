"""Compile expression trees to the flat stack programs run by the kernels."""
from __future__ import annotations

import numpy as np

from . import kernels as K
from .dsl import Binary, Call, Const, ModelAst, Ref, Unary, substitute_params, to_text
from .errors import DslError, EvalError

_BINOPS = {"+": K.OP_ADD, "-": K.OP_SUB, "*": K.OP_MUL, "/": K.OP_DIV, "^": K.OP_POW}
_UNARY_CALLS = {
    "sqrt": K.OP_SQRT, "abs": K.OP_ABS, "sign": K.OP_SIGN, "exp": K.OP_EXP,
    "ln": K.OP_LN, "sin": K.OP_SIN, "cos": K.OP_COS,
}
_MESSAGES = {
    K.ERR_DIV_ZERO: "division by zero",
    K.ERR_SQRT_NEG: "sqrt of a negative number",
    K.ERR_LN_DOMAIN: "ln of a nonpositive number",
    K.ERR_POW_DOMAIN: "power outside its domain",
    K.ERR_HISTORY: "delayed read outside the stored history",
    K.ERR_BAD_OP: "corrupt program",
}


class CompiledSystem:
    """Stack programs for a list of expressions plus a pc -> node map."""

    def __init__(self, program, nodes, exprs):
        self.program = program
        self.nodes = nodes
        self.exprs = exprs

    @property
    def n_out(self):
        return len(self.exprs)

    def error(self, status, pc, time=None):
        node = self.nodes[pc] if 0 <= pc < len(self.nodes) else None
        sub = to_text(node) if node is not None else None
        return EvalError(_MESSAGES.get(status, f"status {status}"), subexpression=sub, time=time)


def _emit(e, resolve, ops, iarg, farg, nodes):
    """Append postfix code for ``e``; returns the stack depth it needs."""
    def put(op, i=0, f=0.0, node=e):
        ops.append(op)
        iarg.append(i)
        farg.append(f)
        nodes.append(node)

    if isinstance(e, Const):
        put(K.OP_CONST, f=e.value)
        return 1
    if isinstance(e, Ref):
        kind, idx = resolve(e.name)
        if kind == "state":
            if e.delay > 0:
                put(K.OP_DELAY, idx, e.delay)
            else:
                put(K.OP_STATE, idx)
        elif kind == "input":
            put(K.OP_INPUT, idx)
        else:
            put(K.OP_CONST, f=idx)
        return 1
    if isinstance(e, Unary):
        depth = _emit(e.arg, resolve, ops, iarg, farg, nodes)
        put(K.OP_NEG)
        return depth
    if isinstance(e, Binary):
        a = _emit(e.left, resolve, ops, iarg, farg, nodes)
        b = _emit(e.right, resolve, ops, iarg, farg, nodes)
        put(_BINOPS[e.op])
        return max(a, b + 1)
    if isinstance(e, Call):
        if e.func in _UNARY_CALLS:
            depth = _emit(e.args[0], resolve, ops, iarg, farg, nodes)
            put(_UNARY_CALLS[e.func])
            return depth
        if e.func == "pow":
            a = _emit(e.args[0], resolve, ops, iarg, farg, nodes)
            b = _emit(e.args[1], resolve, ops, iarg, farg, nodes)
            put(K.OP_POW)
            return max(a, b + 1)
        if e.func in ("min", "max"):
            op = K.OP_MIN if e.func == "min" else K.OP_MAX
            depth = _emit(e.args[0], resolve, ops, iarg, farg, nodes)
            for arg in e.args[1:]:
                depth = max(depth, _emit(arg, resolve, ops, iarg, farg, nodes) + 1)
                put(op)
            return depth
        raise DslError(f"unknown function {e.func!r}")
    raise TypeError(f"not an expression node: {e!r}")


def model_resolver(model: ModelAst):
    states = {s: i for i, s in enumerate(model.state_names)}
    params = model.param_map

    def resolve(name):
        if name in states:
            return "state", states[name]
        if name in params:
            return "param", float(params[name])
        idx = model.input_index(name)
        if idx is not None:
            return "input", idx
        raise DslError(f"unknown identifier {name!r}")

    return resolve


def compile_exprs(exprs, resolve) -> CompiledSystem:
    ops, iarg, farg, nodes, starts = [], [], [], [], [0]
    depth = 1
    for e in exprs:
        depth = max(depth, _emit(e, resolve, ops, iarg, farg, nodes))
        starts.append(len(ops))
    prog = K.make_program(np.array(ops, dtype=np.int32), np.array(iarg, dtype=np.int32),
                          np.array(farg, dtype=float), np.array(starts, dtype=np.int32),
                          depth)
    return CompiledSystem(prog, nodes, tuple(exprs))


def compile_flow(model: ModelAst) -> CompiledSystem:
    return compile_exprs(model.flow_exprs(), model_resolver(model))


def compile_jump(model: ModelAst) -> CompiledSystem:
    return compile_exprs(model.jump_exprs(), model_resolver(model))


def compile_scalar(expr, model: ModelAst) -> CompiledSystem:
    return compile_exprs([substitute_params(expr, model.param_map)], model_resolver(model))
