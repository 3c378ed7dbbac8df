"""Machine Basic Training toolkit: ATC simulation, agents and assessment."""
__version__ = "0.1.0"
