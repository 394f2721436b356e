"""Illuminated decision trees over CNN features.

Train a small CNN on labeled cell crops, fit a decision tree on one layer's
spatial activations, visualize every split feature by activation
maximization, and iterate: spot a biased feature, exclude it, rebuild the
tree, compare accuracies.
"""

__version__ = "0.1.0"
