"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is missing or when VIEWGRAM_PURE_PYTHON=1 is set.  Both
backends implement the same contracts and produce bit-identical results, so
the choice affects speed only.  `BACKEND` names the active one.
"""

import os

from . import pyfallback

if os.environ.get("VIEWGRAM_PURE_PYTHON", "") == "1":
    _impl = pyfallback
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pyfallback
        BACKEND = "python"

gram_windows = _impl.gram_windows
gram_windows_backward = _impl.gram_windows_backward
sgd_update = _impl.sgd_update
# np.clip is one fused ufunc pass and benchmarks faster than the compiled
# loop at every relevant size; both agree bitwise (see benchmarks/).
clip_inplace = pyfallback.clip_inplace
fill_uniform = _impl.fill_uniform

__all__ = [
    "BACKEND",
    "clip_inplace",
    "fill_uniform",
    "gram_windows",
    "gram_windows_backward",
    "sgd_update",
]
