"""topovln - zero-shot continuous-environment navigation on topological graphs."""

__version__ = "0.1.0"
