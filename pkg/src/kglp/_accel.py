"""Backend switch for the compiled kernels.

Set ``KGLP_DISABLE_NUMBA=1`` to route every kernel through its pure-numpy
twin.  ``KGLP_THREADS`` caps the numba thread pool; kernels are written so
results do not depend on it.
"""
import os

import numba

# the default layer probes TBB first and warns when it is too old
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

USE_NUMBA = os.environ.get("KGLP_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def configure_threads(value=None):
    """Apply ``KGLP_THREADS`` (or an explicit count) to numba's pool."""
    if value is None:
        value = os.environ.get("KGLP_THREADS")
    if not value:
        return numba.get_num_threads()
    n = max(1, min(int(value), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
