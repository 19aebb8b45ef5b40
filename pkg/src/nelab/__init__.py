"""nelab: numerical laboratory for nonuniformly elliptic variational problems."""

__version__ = "0.1.0"
