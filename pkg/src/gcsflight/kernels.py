"""Backend selection for the evaluation kernels.

The compiled extension wins decisively on de Casteljau evaluation (the
per-parameter ladder allocates heavily in numpy), while the SNR field kernel
is faster in numpy, whose vectorized transcendentals beat a scalar libm loop;
see ``benchmarks/bench_kernels.py`` for the comparison. Selection is
therefore per function. Set ``GCSFLIGHT_PURE_PYTHON=1`` to force the numpy
implementations everywhere (also used by the parity tests).
"""

import os

from gcsflight import _kernels_py

_compiled = None
if not os.environ.get("GCSFLIGHT_PURE_PYTHON"):
    try:
        from gcsflight import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

decasteljau_many = _compiled.decasteljau_many if _compiled is not None else _kernels_py.decasteljau_many

# numpy on purpose: measured faster than the compiled scalar loop
snr_profile = _kernels_py.snr_profile
