"""Package entry point for `python -m ellipose`."""

import sys

from .cli import main

sys.exit(main())
