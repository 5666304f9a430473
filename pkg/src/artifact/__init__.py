"""Numerical laboratory for symplectic transfer-matrix products on strips.

Subpackages cover the full experimental pipeline: disordered potential
models and reproducible RNG streams (`model`), numerically stable long
products and Lyapunov-spectrum estimation (`cocycle`), truncated-operator
eigenpairs and decay-rate measurement (`spectrum`), closed-form rate bounds
(`bounds`), Monte Carlo checks of the sphere-projection geometry
(`geomlab`), and a JSON-config driven command line (`cli`).
"""

__version__ = "0.1.0"

from .model import (
    Bernoulli,
    ConfigError,
    Gaussian,
    PointMass,
    PotentialModel,
    RichnessReport,
    RngStream,
    UniformInterval,
    deterministic,
    general_symmetric,
    sample_potential,
    schrodinger_strip,
    transverse_block,
    validate_richness,
)
from .cocycle import (
    CocycleState,
    DeviationStat,
    GridSupBound,
    LyapunovEstimate,
    MinDevScan,
    NumericalError,
    TransferMatrix,
    chebyshev_nodes,
    deviation_stat,
    grid_sup_log_norm,
    identity_state,
    initial_condition_state,
    lebesgue_factor,
    log_spectrum_trajectory,
    lyapunov_estimate,
    min_dev_scan,
    propagate,
    propagate_blocks,
    reconstruct,
    replica_rates,
    singular_log_spectrum,
    symplectic_defect,
    symplectic_form,
    transfer_matrix,
    transfer_stack,
)
from .bounds import (
    BoundSet,
    RateClassification,
    classify_rates,
    rate_cap_general,
    rate_cap_general_bisect,
    rate_cap_width2,
    uniform_rate_floor,
)
from .spectrum import (
    DecayRateFit,
    EigenPair,
    FastScanReport,
    FitPolicy,
    TruncatedOperator,
    assemble_truncation,
    eigenpairs_in_window,
    fast_scan,
    fit_decay_rate,
    operator_from_blocks,
)
from .geomlab import (
    ArchimedesReport,
    GeomLemmaCase,
    GeomLemmaGridReport,
    GeomLemmaReport,
    ProjectionDensitySpec,
    archimedes_test,
    geom_lemma_grid,
    geom_lemma_probability,
    sample_haar_symplectic_orthogonal,
    sample_sphere,
)
