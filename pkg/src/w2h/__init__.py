"""Wind-to-hydrogen critical infrastructure scheduling with learned active sets."""
__version__ = "0.1.0"
