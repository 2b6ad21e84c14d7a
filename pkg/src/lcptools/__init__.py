"""Level-crossing probability maps for 2D ensemble scalar fields.

Monte Carlo probabilistic marching squares over per-cell multivariate
Gaussians, plus a sine-activation MLP surrogate that predicts the same
probabilities orders of magnitude faster, with benchmarking, error-report
and rendering tools.
"""

from . import errors
from .cellstats import (
    CellGaussian,
    CellStatsGrid,
    build_training_set,
    cell_statistics,
    field_statistics,
    load_training_set,
    make_training_sample,
    save_training_set,
)
from .ensemble import (
    EnsembleDataset,
    ScalarField2D,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    normalize_global,
    save_dataset,
    split_time,
)
from .evalbench import (
    ErrorReport,
    TimingReport,
    TimingRow,
    ablate_training_size,
    bench,
    error_report,
    evaluate_samples,
)
from .pmc import (
    DETERMINISTIC,
    LcpField,
    McConfig,
    cell_lcp_closed_form_diag,
    cell_lcp_mc,
    cholesky_psd,
    crossing_test,
    lcp_field_parallel,
    lcp_field_serial,
    load_lcp_field,
    save_lcp_field,
)
from .render import ColormapSpec, render_lcp, write_ppm
from .surrogate import (
    CvResult,
    FoldMetrics,
    MlpConfig,
    MlpModel,
    TrainConfig,
    cross_validate,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss_mse,
    predict_field,
    save_model,
    train,
)

__version__ = "0.1.0"
