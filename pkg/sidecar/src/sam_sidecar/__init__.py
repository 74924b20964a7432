"""Segmentation sidecar: runs a promptable segmenter, emits mask manifests."""

__version__ = "0.1.0"
