"""Eigensystem multiscale analysis toolkit for the Anderson model."""

__version__ = "0.1.0"
