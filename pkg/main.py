"""statbench entry point: ``python main.py <subcommand> [--key value ...]``."""

import sys

from cli.workbench import main

if __name__ == "__main__":
    sys.exit(main())
