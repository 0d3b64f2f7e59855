"""Learned join-order optimizer sandbox: replay-based training, meta-learned
initialization, and a deterministic cost-model simulator standing in for the DBMS."""

__version__ = "0.1.0"
