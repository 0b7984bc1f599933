"""fairpairs: generate candidate fairness-constraint pairs for text
classifiers, learn a pair-similarity verdict from human (or simulated)
judgments with active learning, and train fairness-aware downstream models."""

__version__ = "0.1.0"
