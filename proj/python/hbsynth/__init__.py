"""Python surface of the heartbeat-synthesis toolkit.

The compiled module normally sits inside this package. During
build-tree testing it is located via the HBSYNTH_MODULE_DIR
environment variable instead.
"""

import os
import sys

try:
    from ._hbsynth import *  # noqa: F401,F403
    from ._hbsynth import __doc__ as _core_doc  # noqa: F401
except ImportError:
    _module_dir = os.environ.get("HBSYNTH_MODULE_DIR")
    if not _module_dir:
        raise
    sys.path.insert(0, _module_dir)
    try:
        from _hbsynth import *  # noqa: F401,F403
    finally:
        sys.path.pop(0)
