"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise,
or when the environment variable ``IMPULSIVE_ISS_PURE`` is set to a
non-empty value other than ``0``, the identical pure-Python implementation
is used.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

_force_pure = os.environ.get("IMPULSIVE_ISS_PURE", "") not in ("", "0")

if compiled_backend is not None and not _force_pure:
    active = compiled_backend
else:
    active = python_backend

BACKEND = active.BACKEND

make_program = active.make_program
hermite_eval = active.hermite_eval
eval_system = active.eval_system
rk4_step = active.rk4_step
adt_sweep = active.adt_sweep
adt_pairs = active.adt_pairs
karp = active.karp

from ._pykernels import (  # noqa: E402  opcodes and status codes are backend independent
    ERR_BAD_OP,
    ERR_DIV_ZERO,
    ERR_HISTORY,
    ERR_LN_DOMAIN,
    ERR_POW_DOMAIN,
    ERR_SQRT_NEG,
    OK,
    OP_ABS,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DELAY,
    OP_DIV,
    OP_EXP,
    OP_INPUT,
    OP_LN,
    OP_MAX,
    OP_MIN,
    OP_MUL,
    OP_NEG,
    OP_POW,
    OP_SIGN,
    OP_SIN,
    OP_SQRT,
    OP_STATE,
    OP_SUB,
)


def backends():
    """Available backend modules, compiled first."""
    out = []
    if compiled_backend is not None:
        out.append(compiled_backend)
    out.append(python_backend)
    return out
