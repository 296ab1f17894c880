"""Data, training, evaluation and command-line plumbing around the model."""
