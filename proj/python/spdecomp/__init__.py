"""Shared multi-resolution spatial components for irregularly observed images.

Thin wrapper around the compiled extension; everything public lives in
``spdecomp._core``.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
__version__ = "0.1.0"
