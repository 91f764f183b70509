"""Chemical relaxation oscillators, symmetric clock signals and sequenced reaction modules."""
__version__ = "0.1.0"
