"""Decoy-pulse circuit obfuscation with a simulated trusted attenuation backend."""

__version__ = "0.1.0"
