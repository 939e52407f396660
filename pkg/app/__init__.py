"""Constrained risk-aware planning over learned local values."""
