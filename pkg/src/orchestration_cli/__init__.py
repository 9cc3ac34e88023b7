"""Package for file-level pipelines and the ``dtireg`` command line."""

__all__ = ["__version__"]

# Single source for --version and run manifests.
__version__ = "0.1.0"
