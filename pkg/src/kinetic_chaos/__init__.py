"""Hard-sphere kinetic simulation and verification toolkit.

Event-driven hard-sphere dynamics in the low-density scaling
N * epsilon^(d-1) = 1/ell, conditioned factorized initial data, backward
collision-tree Monte Carlo for the hierarchy of marginal equations, the
geometric good/bad phase-space sets controlling recollisions, and the
empirical convergence experiment comparing ensemble marginals against the
kinetic reference solution.
"""

__version__ = "0.1.0"

from .core import (PhasePoint, SimConfig, Functionals, CutoffParams,
                   WeightParams, collide, functionals, in_K, in_U_eta,
                   in_tilde_U_eta, in_G, in_hat_U_eta, default_chi)
from .flow import (FlowEvent, FlowEventLog, FlowPolicy, DegenerateEventError,
                   next_collision, advance, backward, advance_tilde,
                   backward_tilde)
from .ensemble import (DensitySpec, PartitionEstimate, MarginalEstimate,
                       EvolvedEnsemble, sample_initial, estimate_partition,
                       prefix_partition_estimates, evolve_ensemble,
                       estimate_marginal, marginal_at_points, chaos_error)
from .pseudo import (CreationSequence, PseudoTrajectoryResult, DepthEstimate,
                     SeriesEstimate, ProductData, PartialProductData,
                     coefficient_a, build_pst, duhamel_mc,
                     enskog_factorization_residual)
from .badsets import (BadSetContext, BadSetVerdict, BadMeasureEstimate,
                      StabilityReport, CapMeasureEstimate, band_measure_exact,
                      cylinder_cap_measure, classify_candidate, classify_batch,
                      estimate_bad_measure, verify_stability)
from .analysis import (HierarchyData, GaussianPhaseDensity, BoltzmannSolution,
                       weighted_sup_norm, duality_bracket, dispersive_check,
                       boltzmann_series_solve)
from .config import ExperimentConfig, RunManifest, ConfigError
from .csvio import SCHEMA_LINE, write_csv, read_csv
