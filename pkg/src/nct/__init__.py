"""Numerical noncommutative analytic torsion over finite and free-abelian group algebras."""
import os as _os

__version__ = "0.1.0"

# NCT_THREADS caps BLAS/OpenMP threads; it only takes effect when numpy has not
# been imported yet, so it is applied at package import time.
_threads = _os.environ.get("NCT_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
