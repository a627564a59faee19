"""Randomized Transferable Machine: ridge classification under marginalized dropout noise."""

__version__ = "0.1.0"

from .core import (
    LinearModel,
    MomentPair,
    RtmConfig,
    cross_moment,
    load_model,
    predict,
    save_model,
    second_moment,
    solve_weights,
    train_ridge,
    train_rtm,
)
from .dataset import DomainPair, FeatureMatrix, LabelSet, load_dense, load_sparse, one_hot
from .evaluation import ComparisonTable, SweepReport, accuracy, compare, default_grid, sweep_p
from .oracle import CorruptionRun, corrupt_dropout, enumerate_expectation, train_mc
