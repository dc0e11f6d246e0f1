"""Packaged mesh data files."""
