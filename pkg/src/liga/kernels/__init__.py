"""Hot numeric kernels with selectable backend.

The numba backend is the default. Set ``LIGA_NUMBA=0`` (or ``false``/``off``)
to force the pure-numpy fallback; the flag is read once at import time.
Both backends are bit-identical, see ``benchmarks/bench_kernels.py`` for a
speed comparison.
"""
import os

_flag = os.environ.get("LIGA_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:
        from . import _numpy as _impl
        BACKEND = "numpy"
else:
    from . import _numpy as _impl
    BACKEND = "numpy"

bilinear_gather = _impl.bilinear_gather
bilinear_scatter = _impl.bilinear_scatter
trilinear_gather = _impl.trilinear_gather
trilinear_scatter = _impl.trilinear_scatter
bev_iou_matrix = _impl.bev_iou_matrix
render_depth = _impl.render_depth

from ._numpy import clip_convex, polygon_area, pair_bev_iou, CLIP_EPS  # noqa: E402
