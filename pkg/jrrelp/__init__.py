"""jrrelp-lab: joint relation extraction and knowledge-graph link prediction."""

__version__ = "1.0.0"
