#!/usr/bin/env python
"""qst-lab's command-line utility for running tomography studies."""
import sys


def main():
    """Run a qst-lab subcommand."""
    from cli.commands import run_cli
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == '__main__':
    main()
