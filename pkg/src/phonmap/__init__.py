"""Cross-lingual symbol mapping discovery with a phonetic transformation network."""

__version__ = "0.1.0"
