"""Subgraph-level federated GCN recommendation with PSI K-hop extension and edge LDP."""

__version__ = "0.1.0"
