"""Momentum-contrastive zero-shot slot filling."""

try:
    from ._slotmoco import *  # noqa: F401,F403  (installed wheel layout)
except ImportError:
    from _slotmoco import *  # noqa: F401,F403  (in-tree build on PYTHONPATH)

__version__ = "0.1.0"
