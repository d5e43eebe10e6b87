# Entry point: python -m src.ranopt.main <command> [options]

from __future__ import annotations
import sys

from src.ranopt.cli import main

if __name__ == "__main__":
    sys.exit(main())
