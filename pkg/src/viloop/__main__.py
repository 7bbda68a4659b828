import sys

from viloop.harness.cli import main

sys.exit(main())
