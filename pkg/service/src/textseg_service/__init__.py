"""Inference microservice for the text-annotation wire protocol."""

__version__ = "0.1.0"
