"""Preference-aligned action selection for manipulation primitives.

Three-stage pipeline on desk-scale simulated tasks: supervised
pretraining of a diffusion action policy, preference finetuning against
a frozen reference, and reward-guided best-of-N action selection at
inference. See README.md for the command-line walkthrough.
"""

__version__ = "0.1.0"
