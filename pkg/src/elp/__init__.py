"""Engagement-level prediction for search clarification panes.

A library plus CLI harness for predicting how strongly users engage with
a clarification pane (question + candidate answers) shown for a web query,
from the query text, the pane text, and the retrieved result page.
"""

__version__ = "0.1.0"
