"""Score fusion and evaluation for MOS prediction ensembles."""

__version__ = "0.1.0"
