"""Severity grading of coronary artery disease from angiography text with a
recurrent capsule network for relation extraction."""

__version__ = "0.1.0"
