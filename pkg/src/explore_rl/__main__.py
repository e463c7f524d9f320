import sys

from explore_rl.cli import main

sys.exit(main())
