"""Sub-pixel hyperspectral target detection with Bayesian neural networks."""

from ._core import (
    ConfigError,
    DataError,
    Error,
    FpcaBasis,
    IoError,
    Model,
    NumericalError,
    __version__,
    credible_interval,
    draw_from_vi,
    fit_fpca,
    fit_vi_bnn,
    hmc_sample,
    hmc_sample_bnn,
    parse_config,
    pd_at_far,
    predictive_matrix,
    roc_curve,
    run_pipeline,
    simulate_scene,
    split_rhat,
    summarize,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
