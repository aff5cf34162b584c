"""Closed-form gradient-inversion attack on small CNNs, with constraint/rank auditing."""
