"""fairmtl: fairness-aware multi-task training for linear text classifiers.

The package trains a linear classifier on summed word vectors together with
an auxiliary bias-detection head.  Bias pseudo-labels for the auxiliary task
come either from attribute annotations, from unsupervised clustering of each
label group, or from a small annotated seed set extended by nearest-neighbour
propagation.  An evaluation harness computes prediction fairness, accuracy
and their harmonic mean, and a FastAPI service plus thin CLI expose runs,
parameter sweeps, synthetic-corpus generation and report rendering.
"""

__version__ = "0.1.0"
