"""Allow ``python -m metasysid``."""

import sys

from .cli import main

sys.exit(main())
