"""Context-driven graph augmentation with LLM-generated knowledge graphs."""

__version__ = "0.1.0"
