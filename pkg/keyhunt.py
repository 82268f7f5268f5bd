#!/usr/bin/env python
import sys

from src.cli import main
from src.log import configure_logging

if __name__ == "__main__":
    configure_logging()
    sys.exit(main())
