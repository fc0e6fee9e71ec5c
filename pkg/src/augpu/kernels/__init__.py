"""Hot kernels: counter-based random draws and Monte-Carlo risk integrands.

The compiled extension is used when it was built; otherwise the NumPy
fallback is selected. Both produce bit-identical output. Set
``AUGPU_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("AUGPU_PURE_PYTHON", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _fast as compiled
    except ImportError:
        compiled = None

_active = compiled if compiled is not None else _fallback
BACKEND = "compiled" if compiled is not None else "python"

uniform_block = _active.uniform_block
normal_block = _active.normal_block
risk_terms = _active.risk_terms

__all__ = ["BACKEND", "uniform_block", "normal_block", "risk_terms", "compiled", "fallback"]
