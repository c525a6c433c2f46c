"""Architecture search pipeline: training, ranking, retraining."""

from .nsga import nsga2
from .optim import OPTIMIZERS, optimizer_step
from .pipeline import (
    QasConfig,
    RankingEntry,
    RunRecord,
    TrainingAborted,
    histogram,
    loss_trajectory,
    rank_evolutionary,
    rank_uniform,
    ranking_histogram,
    regret,
    retrain,
    run_search,
    split_metrics,
    train,
)
