"""Weak-measurement metrology with a saturating pixel detector."""

from ._satmetro import *  # noqa: F401,F403
from ._satmetro import __version__  # noqa: F401
