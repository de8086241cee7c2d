"""Module entry point so ``python -m subpix`` behaves like the console script."""

from .cli import entry

entry()
