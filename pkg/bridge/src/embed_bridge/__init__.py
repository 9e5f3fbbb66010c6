"""embed-bridge: encode text with a pretrained multilingual sentence
encoder and stream the vectors as an EMB1 file, one row per input line."""

__version__ = "0.1.0"
