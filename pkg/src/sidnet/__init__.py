"""Multi-modal handwritten script identification."""
