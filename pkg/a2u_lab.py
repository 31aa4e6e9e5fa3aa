#!/usr/bin/env python3
"""
A2U Lab - command-line runner
Pins BLAS threading before numpy loads; --threads controls batch parallelism instead
"""
import os
import sys

for _var in ("OMP_NUM_THREADS", "MKL_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

from src.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
