"""Deep convolutional sparse coding networks for image fusion."""

import os

from cscfuse.config import get_thread_count
from cscfuse.errors import ConfigError

__version__ = "0.1.0"

# BLAS thread count must be fixed before numpy loads; summation order (and with
# it bit-exact results) depends on it.
try:
    _threads = str(get_thread_count())
except ConfigError:
    _threads = "1"
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _threads)
