"""Cross-view relation network for paired-view lesion detection."""

__version__ = "0.1.0"
