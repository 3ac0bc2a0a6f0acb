"""Two-stream air-written digit recognition: C3D on frames, LeNet on OFMT templates."""

__version__ = "0.1.0"
