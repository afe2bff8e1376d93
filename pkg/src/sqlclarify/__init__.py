"""Interactive text-to-SQL clarification framework."""

__version__ = "0.1.0"
