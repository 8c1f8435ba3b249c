"""treetalk: narrative explanations for categorical decision trees.

Turns depth-bounded trees over categorical patient features into local,
global, and Shapley-based narrative explanations, serves them through a
two-page survey flow, and quantifies reader understanding with
mental-model metrics and significance tests.
"""

__version__ = "0.1.0"
