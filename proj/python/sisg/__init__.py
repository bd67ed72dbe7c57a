"""Python bindings for the sisg semantic image synthesis library.

Images are numpy arrays shaped (3, 64, 64) with values in [-1, 1].
"""

from ._core import *  # noqa: F401,F403
from ._core import Model, ShapeError, ConfigError, ConfigMismatch  # noqa: F401
