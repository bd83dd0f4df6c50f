import sys

from lnnbench.cli import main

sys.exit(main())
