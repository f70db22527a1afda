"""Dimension theory of self-similar measures, numerically.

Symbolic structure functions and Legendre spectra, Markov and Gibbs
measures on full shifts, similarity systems with certified cylinder
enclosures, point-cloud dimension estimators, projection and separation
experiments, and a batch CLI that replays everything from seeded configs.
"""

__version__ = "0.1.0"

from .errors import (
    AlphabetMismatchError,
    BudgetExceededError,
    EstimationError,
    FractdimError,
    PreconditionError,
    SchemaError,
    WordTooShortError,
)
from .symbolic import AdaptedMetric, Alphabet, as_word, common_prefix
from .measures import (
    BernoulliMeasure,
    GibbsMeasure,
    LocallyConstantPotential,
    MarkovMeasure,
    gibbs_from_potential,
    markov_approximation,
    markov_from_word,
    rational_kernel_approximation,
    relative_entropy,
)
from .multifractal import (
    SpectrumCurve,
    SpectrumProblem,
    T_derivative,
    alpha_range,
    legendre,
    optimal_measure,
    solve_T,
    solve_T_many,
    spectrum_curve,
)
from .ifs import (
    SimilarityIFS,
    TranslationFamily,
    cylinder_balls,
    lyapunov_exponent,
    natural_projection,
    pressure,
    sample_points,
    similarity_dimension,
    symbolic_dimension,
    transversality_exponent,
)
from .dimest import (
    PointCloud,
    RadiusSchedule,
    box_counting,
    coarse_spectrum,
    correlation_dimension,
    empirical_energy,
    local_dimension,
    relative_dimension_bound,
    relative_dimension_estimate,
    schedule_for,
    weak_diametric_regularity_check,
)
from .projections import (
    Subspace,
    ede_check,
    holder_inverse_check,
    marstrand_experiment,
    project_cloud,
    sample_subspace,
)
from .runtime import enumeration_budget, run_chunks, substream
