"""Content-adaptive resolution ladders for interactive streaming.

Core building blocks: bitrate zones and ladder tables, per-frame encoder
statistics ingestion, the 60-frame feature window, per-zone CNN classifiers
with from-scratch training, convex-hull ladder analysis, BD metrics with
significance testing, and an online decision engine with a channel simulator.
"""

__version__ = "0.1.0"
