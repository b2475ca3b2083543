#!/usr/bin/env python3
"""Main entry point for fairbarycenter."""

from fairbarycenter.cli import cli

if __name__ == "__main__":
    cli()
