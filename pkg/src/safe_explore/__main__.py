import sys

from safe_explore.harness.cli import main

sys.exit(main())
