"""Matchable image retrieval: geometric overlap ground truth, mask triplet
losses, MAC / R-MAC / PR-MAC aggregation and an exact mAP@k retrieval engine."""

__version__ = "0.1.0"
