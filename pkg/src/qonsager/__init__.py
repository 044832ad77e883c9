"""Verification workbench for the q-Onsager algebra and the open XXZ chain."""

__version__ = "0.1.0"
