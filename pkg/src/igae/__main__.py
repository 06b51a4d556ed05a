import os
import sys

# thread caps must be in place before numpy loads its BLAS
_threads = os.environ.get("IGAE_THREADS")
if _threads:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, _threads)

from igae.cli import main  # noqa: E402

sys.exit(main())
