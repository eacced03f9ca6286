"""Mean-variance frontiers with sparse covariance and universe reduction."""
from . import classifier, frontier, lp_reduction, market_data, sparsifier
from .errors import *  # noqa: F401,F403
from .frontier import (
    LambdaSchedule,
    asset_inclusion,
    evaluate,
    find_max_lambda,
    lambda_schedule,
    trace_frontier,
)
from .market_data import (
    AssetMask,
    MomentSet,
    PriceMatrix,
    ReturnMatrix,
    compute_returns,
    load_prices,
    moments,
    reduce_universe,
    split,
    synth_prices,
)
from .qp import QpProblem, RiskModel, solve_markowitz, solve_min_risk
from .sparsifier import complete, is_psd, select_levels, sparsify, sweep

__version__ = "0.1.0"
