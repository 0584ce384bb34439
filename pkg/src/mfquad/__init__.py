"""Quasirandom quadratures for mean-field expectations and a sparsifying
variational trainer built on them."""

from .quadrature import (
    AntitheticPair,
    BlockPartition,
    NodeSet,
    antithetic_pair,
    blocked_quadrature,
    blocked_simplex_standard,
    count_exact_pairs,
    cross_polytope_signs,
    exactness_period,
    mc_nodes,
    mean_matched_nodes,
    moment_matched_nodes,
    relative_parity,
    sign_sequence,
    simplex_sigma_points,
    trial_rng,
)
from .meanfield import (
    GaussianMeanField,
    LaplaceMeanField,
    OrthonormalBasis,
    SpikeSlabMeanField,
    basis_product_expectation,
    integrate,
    moments,
    orthonormal_basis,
    preset,
    spike_slab_moments,
)
from .projection import (
    EvaluationError,
    QuadraticSummary,
    full_period,
    quadratic_approx,
)
from .models import (
    Dataset,
    IdxFormatError,
    LogisticModel,
    MlpModel,
    QuadraticOracleModel,
    gradient_check,
    load_dataset_csv,
    read_idx,
    save_dataset_csv,
    synth_sparse_logistic,
    write_idx,
)
from .trainer import (
    EpochStats,
    TrainConfig,
    TrainState,
    anneal_target,
    hybrid_coeffs,
    init_state,
    load_checkpoint,
    run_epoch,
    save_checkpoint,
    sieve_map,
    sparsity_schedule,
    train,
    variational_update,
    zero_logits,
)

__version__ = "0.1.0"
