"""Meta-path based attentional graph learning for function-level vulnerability detection."""

__version__ = "0.1.0"
