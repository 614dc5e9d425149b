"""Pick the compiled kernels when importable, else the numpy fallback.

Set ``JEPA_SCORE_BACKEND=python`` to force the fallback.
"""

import os

from jepa_score import _fallback

BACKEND = "python"
kernels = _fallback

if os.environ.get("JEPA_SCORE_BACKEND", "").lower() != "python":
    try:
        from jepa_score import _kernels as kernels  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        kernels = _fallback
