"""Database module for experiment results."""
