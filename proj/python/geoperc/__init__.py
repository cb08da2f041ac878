"""Python bindings for the geoperc C++ core."""

from ._core import *  # noqa: F401,F403
from ._core import ParseError, DataError, DegenerateInput, __version__  # noqa: F401
