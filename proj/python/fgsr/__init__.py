"""GAN super-resolution core: resampling, metrics, losses, training."""

from ._fgsr import *  # noqa: F401,F403
from ._fgsr import __doc__  # noqa: F401
