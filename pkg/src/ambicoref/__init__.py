"""Ambiguous-pronoun challenge set construction and resolver evaluation."""

__version__ = "0.1.0"
