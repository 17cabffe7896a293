"""Player valuation from soccer event streams.

Pipeline: ingest provider event data into SPADL actions, fit an
expected-threat surface, label each event with its threat change, build
temporally-windowed event graphs, train a graph model (convolutional,
neighbor-attention, or global-attention) to predict the change, and split
each event's threat across players by the magnitude of their learned
embeddings.
"""

__version__ = "0.1.0"
