from ..rng import derive_stream_seed
from .config import Config, ConfigError, default_config, load_config, parse_config
from .fitting import censored_median, fit_loglog_slope, wilson_ci
from .pipelines import (
    ExtinctionRecord,
    GammaEstimateRecord,
    estimate_gamma,
    extinction_medians,
    extinction_scaling,
    gamma_volume,
    good_box_runs,
    run_config,
    run_pipeline,
    star_chain_success,
    stream_seed,
    write_csv,
)
