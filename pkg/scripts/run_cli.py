"""Run the ddn command line from a source checkout.

Usage:
    python scripts/run_cli.py <command> [options]
"""

import os
import sys

# Ensure the project root is on the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddn.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
