"""Time elastic neural networks built on the KDTW kernel."""
