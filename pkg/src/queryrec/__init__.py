"""Interactive query suggestion: candidate generation over a behavior graph,
an attention-GRU ranker, item retrieval for clicked queries, and a serving
loop that ties them together."""

__version__ = "0.1.0"
