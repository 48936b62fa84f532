"""Transformation pass library.

Importing this package populates the pass registry used by schedules:
forkify, fork-chunk, fork-tile, fork-reshape, fork-fission, fork-fuse,
monoid-reassociate, inline, outline, parallelize, async-call,
infer-attributes, dce, constant-fold, plus the unsafe attribute appliers.
"""

from .common import (FunctionHandle, PassError, PassResult, RegionValue,
                     lookup, registry)
from . import forkify    # noqa: F401
from . import forks      # noqa: F401
from . import fissfuse   # noqa: F401
from . import monoid     # noqa: F401
from . import attrs      # noqa: F401
from . import outline    # noqa: F401
from . import cleanup    # noqa: F401

__all__ = ["FunctionHandle", "PassError", "PassResult", "RegionValue",
           "lookup", "registry"]
