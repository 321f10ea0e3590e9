"""quest: a self-hostable tournament platform for reproducible benchmarking.

Packages artifacts with machine-readable metadata, runs benchmark
workflows that capture the execution environment, and maintains a live
scoreboard marking Pareto-optimal submissions across accuracy, speed,
energy, footprint, and cost.
"""

__version__ = "0.1.0"
