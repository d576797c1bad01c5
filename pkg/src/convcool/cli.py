"""Console entry point; all behavior lives in :mod:`convcool.app`."""

import sys

from .app import run


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
