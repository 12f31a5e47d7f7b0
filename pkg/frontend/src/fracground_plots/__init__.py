"""Publication-style figures from fracground run artifacts.

Strictly a consumer of the solver CLI's file contract (JSON run records and
TSV sweep tables); all numerical content is drawn as persisted, never
recomputed.
"""

__version__ = "0.1.0"
