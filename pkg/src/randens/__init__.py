"""Pattern-based forecasting with ensembles of randomized neural networks."""

from .data import (
    CsvSchema,
    EnsembleForecaster,
    NaiveForecaster,
    RollingForecastResult,
    load_csv,
    naive_forecast,
    read_exclusions,
    rolling_forecast,
    synth_series,
)
from .ensemble import DiversityStrategy, Ensemble, diversity, predict_ensemble, train_ensemble
from .evaluation import MetricsReport, ape_distribution, compute_metrics, gw_test
from .patterns import CodingVariables, TrainingSet, build_training_set, decode, encode_input, encode_output
from .randnn import RandNNConfig, RandNNModel, fit_output_weights, grid_search_cv, predict, train
from .timeseries import SeasonalSequence, TimeSeries, split_cycles

__version__ = "0.1.0"
