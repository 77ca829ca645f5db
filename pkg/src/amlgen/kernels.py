"""Kernel selection: compiled extension when available, numpy otherwise.

Set ``AMLGEN_BACKEND=python`` to force the fallback.  ``BACKEND`` reports
which one is active.
"""
from __future__ import annotations

import os

from . import _kernels_py as python_backend

compiled_backend = None
try:
    from . import _ckernels as compiled_backend  # type: ignore[no-redef]
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("AMLGEN_BACKEND", "") != "python":
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"

settle_sampled = _impl.settle_sampled
group_stats = _impl.group_stats
best_split = _impl.best_split
truncnorm_cents_scalar = _impl.truncnorm_cents_scalar
format_tx_csv = _impl.format_tx_csv
