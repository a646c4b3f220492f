"""Recurrent event analysis: nonparametric mean functions, joint frailty
scale-change regression, simulation and plotting."""

__version__ = "0.1.0"

from .data import (
    DataError,
    Interval,
    RecurrentDataset,
    SubjectRecord,
    ValidationError,
    ValidationReport,
    from_arrays,
    parse_dataset,
    read_dataset,
    resample_clusters,
    stratify,
    summarize,
    validate,
    write_dataset,
)
from .lwyy import LwyyFit, fit_lwyy
from .nonparametric import (
    EstimationError,
    McfCurve,
    bootstrap_mcf_ci,
    estimate_mu_z,
    mean_cumulative,
    nelson_aalen_mcf,
    npmle_shape,
)
from .plotting import PlotStyle, combine_curves, event_plot_data, render_svg
from .regression import (
    JointFit,
    ModelSpec,
    bootstrap_covariance,
    estimate_frailties,
    estimate_hazard,
    estimate_rate,
    fit_joint,
    parse_model,
    predict_cumulative,
    wald_test,
)
from .simulate import SimConfig, default_config, paper_display_preset, simulate_gsc
from .solver import SolverConfig, SolverResult, minimize_norm, solve_root
from .stepfun import StepFunction

__all__ = [
    "DataError",
    "Interval",
    "RecurrentDataset",
    "SubjectRecord",
    "ValidationError",
    "ValidationReport",
    "from_arrays",
    "parse_dataset",
    "read_dataset",
    "resample_clusters",
    "stratify",
    "summarize",
    "validate",
    "write_dataset",
    "LwyyFit",
    "fit_lwyy",
    "EstimationError",
    "McfCurve",
    "bootstrap_mcf_ci",
    "estimate_mu_z",
    "mean_cumulative",
    "nelson_aalen_mcf",
    "npmle_shape",
    "PlotStyle",
    "combine_curves",
    "event_plot_data",
    "render_svg",
    "JointFit",
    "ModelSpec",
    "bootstrap_covariance",
    "estimate_frailties",
    "estimate_hazard",
    "estimate_rate",
    "fit_joint",
    "parse_model",
    "predict_cumulative",
    "wald_test",
    "SimConfig",
    "default_config",
    "paper_display_preset",
    "simulate_gsc",
    "SolverConfig",
    "SolverResult",
    "minimize_norm",
    "solve_root",
    "StepFunction",
]
