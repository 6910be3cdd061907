import sys

from liquidbench.cli import main

sys.exit(main())
