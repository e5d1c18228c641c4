"""Walk-kernel backend selection.

The compiled kernel is used when it was built and ``NEARCONVEX_PURE_PYTHON``
is unset (or ``0``).  Both backends return identical results for identical
inputs; the compiled one is only faster.
"""
from __future__ import annotations

import os

from . import _pykernel
from .errors import (DegenerateError, GeometryError, InvalidInputError, PreconditionError,
                     SamplerError)

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

_STATUS = {
    1: (GeometryError, "membership extends beyond the declared outer radius"),
    2: (GeometryError, "chord search exceeded its iteration cap"),
    3: (PreconditionError, "point lies within the boundary tolerance of the body"),
    4: (GeometryError, "degenerate direction: rounding map collapsed the sample"),
    5: (SamplerError, "near-maximum search exceeded its iteration cap"),
    6: (SamplerError, "tail-point bisection exceeded its iteration cap"),
    7: (SamplerError, "rejection sampler exceeded its proposal cap"),
    8: (DegenerateError, "log-density is -inf at every probe of the near-maximum search"),
    10: (SamplerError, "log-density is NaN"),
}


def compiled_available() -> bool:
    return _ckernel is not None


def _want_compiled() -> bool:
    flag = os.environ.get("NEARCONVEX_PURE_PYTHON", "")
    return _ckernel is not None and flag in ("", "0")


BACKEND = "compiled" if _want_compiled() else "python"


def _raise(status: int, errors: list, step: int | None):
    if status == 9 and errors:
        raise errors[0]
    cls, msg = _STATUS.get(status, (InvalidInputError, f"kernel status {status}"))
    if step is not None:
        msg = f"step {step}: {msg}"
    err = cls(msg)
    err.step = step
    raise err


def run_walk(body, target, rounding_rows, beta, params, tol, x0, steps, rng,
             record_trace=False, strict_first=True, backend: str | None = None):
    """Dispatch to the selected backend; see ``_pykernel.run_walk``."""
    backend = backend or BACKEND
    if backend == "python":
        return _pykernel.run_walk(body, target, rounding_rows, beta, params, tol, x0, steps, rng,
                                  record_trace, strict_first)
    if _ckernel is None:
        raise InvalidInputError("compiled kernel is not available")
    status, step, errors, result = _ckernel.run_walk(body, target, rounding_rows, beta, params, tol,
                                                     x0, steps, rng, record_trace, strict_first)
    if status:
        _raise(status, errors, step)
    return result


def run_line(target, origin, direction, lo, hi, beta, params, size, rng, backend: str | None = None):
    """Dispatch to the selected backend; see ``_pykernel.run_line``."""
    backend = backend or BACKEND
    lo, hi, beta = float(lo), float(hi), float(beta)
    if backend == "python":
        return _pykernel.run_line(target, origin, direction, lo, hi, beta, params, size, rng)
    if _ckernel is None:
        raise InvalidInputError("compiled kernel is not available")
    status, errors, result = _ckernel.run_line(target, origin, direction, lo, hi, beta, params,
                                               size, rng)
    if status:
        _raise(status, errors, None)
    return result
