"""Time-varying rankings with score-driven Plackett-Luce worths."""

from .estimation import (
    EstimationError,
    FitResult,
    OptimizerConfig,
    aic,
    confidence_interval,
    connectivity_check,
    fit,
    standard_errors,
)
from .gas_filter import (
    FilterDivergence,
    FilterOutput,
    ModelSpec,
    PanelDataset,
    ParameterVector,
    filter_path,
    unconditional_worth,
)
from .plackett_luce import Ranking, fisher_information, log_pmf, sample, score
from .prediction import RankingEvent, event_probability, predict_worth, predicted_ranking
from .simulation import SimulationDesign, StudyReport, replication_study, simulate_panel

__version__ = "0.1.0"
