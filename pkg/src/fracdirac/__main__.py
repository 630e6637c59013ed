"""``python -m fracdirac`` entry point."""

import sys

from fracdirac.cli import main

sys.exit(main())
