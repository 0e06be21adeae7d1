"""Railway LiDAR annotation toolkit.

Points are ``(n, 5)`` float arrays with columns x, y, z, intensity, t_rel.
"""

from ._railseg import *  # noqa: F401,F403
from ._railseg import Error, FormatError, IoError, ValidationError

__all__ = [name for name in dir() if not name.startswith("_")]
