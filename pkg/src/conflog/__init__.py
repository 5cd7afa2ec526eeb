"""Configuration-aware logging enhancement.

Detect configuration-sensitive code through taint analysis over a program
dependence graph, then inject logging statements that expose parameter keys,
checked constraints and runtime values.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("conflog")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = ["__version__"]
