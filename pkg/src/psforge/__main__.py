import sys

from psforge.cli import main

sys.exit(main())
