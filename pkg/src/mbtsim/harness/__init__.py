"""File formats, scenario generation, configuration and the command line."""
