"""Feature-combination study for LoRaWAN spreading-factor prediction."""

__version__ = "0.1.0"
