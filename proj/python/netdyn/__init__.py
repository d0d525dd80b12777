"""Closed-form discovery of networked ODE dynamics from trajectory data."""

import os
import sys

_module_dir = os.environ.get("NETDYN_MODULE_DIR")
if _module_dir and _module_dir not in sys.path:
    # development builds: the extension lives in the CMake build tree
    sys.path.insert(0, _module_dir)

try:
    from _netdyn import *  # noqa: F401,F403
    from _netdyn import __doc__ as _core_doc
except ImportError:
    from netdyn._netdyn import *  # noqa: F401,F403
    from netdyn._netdyn import __doc__ as _core_doc

__doc__ = _core_doc or __doc__
