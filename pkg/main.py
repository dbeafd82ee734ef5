import os
import sys

# one BLAS thread per worker process
os.environ.setdefault("OMP_NUM_THREADS", "1")

from cli import main

if __name__ == "__main__":
    sys.exit(main())
