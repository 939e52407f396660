"""Core module: settings, errors and categorical distributions."""
