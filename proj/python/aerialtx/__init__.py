"""Task-oriented aerial image transmission: channel, codec, policy and simulator."""

from ._core import *  # noqa: F401,F403
from ._core import ConfigError, Error  # noqa: F401

__all__ = [name for name in dir() if not name.startswith("_")]
