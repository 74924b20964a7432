"""scenewatch: scene-change anomaly detection for monitored workspaces."""

__version__ = "0.1.0"
