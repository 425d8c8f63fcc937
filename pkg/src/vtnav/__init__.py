"""Visual-trajectory navigation: panoramic range sensing, bidirectional
observation prediction, probabilistic trajectory selection, and a benchmark
harness on simulated indoor worlds."""

__version__ = "0.1.0"
