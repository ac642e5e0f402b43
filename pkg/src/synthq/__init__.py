"""Synthetic query generation, document augmentation, autocomplete and
retrievability simulation for cold-start catalog items."""

__version__ = "0.1.0"
