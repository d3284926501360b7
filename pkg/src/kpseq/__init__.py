"""One2Seq keyphrase generation toolkit."""

__version__ = "0.1.0"
