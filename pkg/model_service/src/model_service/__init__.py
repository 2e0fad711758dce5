"""Fine-tuning and serving for the controllable question generation model."""

__version__ = "0.1.0"
