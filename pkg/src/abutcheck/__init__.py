"""Standard-cell abutment enumeration, routing and boundary DRC."""

__version__ = "0.1.0"
