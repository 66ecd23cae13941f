"""Kernel dispatch: compiled core when available, pure Python otherwise.

The compiled extension (``narrative_enrich._ckernels``, built from Cython) and
the pure-Python module (``narrative_enrich._pykernels``) implement the same
operations with identical semantics. Selection happens once at import time;
set ``NARRATIVE_ENRICH_PURE_PYTHON=1`` to force the fallback (used by the
parity tests and the kernel benchmark).
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("NARRATIVE_ENRICH_PURE_PYTHON") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels

IMPL: str = _impl.IMPL

syllable_count = _impl.syllable_count
syllable_totals = _impl.syllable_totals
token_projection = _impl.token_projection
mmr_order = _impl.mmr_order
