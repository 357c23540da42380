"""Natural-language image retrieval for ecological observation corpora."""

__version__ = "0.1.0"
