import sys

from .bench_io.cli import main

sys.exit(main())
