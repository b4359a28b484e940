"""Two-stage scene graph generation: label refinement, then predicate scoring."""

__version__ = "0.1.0"
