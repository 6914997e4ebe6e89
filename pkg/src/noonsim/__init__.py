"""Two-photon NOON-state generation, storage and interference simulator."""

__version__ = "0.1.0"
