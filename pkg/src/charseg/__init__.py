"""charseg: character-level scene-text segmentation annotation pipeline."""

__version__ = "0.1.0"
