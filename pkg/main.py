"""Main entry point for wedge-kit."""

import sys

if __name__ == "__main__":
    from wedge_kit.cli import app

    sys.exit(app())
