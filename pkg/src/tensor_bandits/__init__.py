"""Low-rank tensor bandits.

Dense tensor algebra, Tucker decompositions, Phase A tensor regression, the
tail-block projection, LowOFUL, synthetic environments and an experiment
harness.
"""

from .bandit import (
    LowOFUL,
    LowOfulConfig,
    RegretTrace,
    TofuConfig,
    corollary1_T1,
    run_oful_vectorized,
    run_random,
    run_tofu,
    theorem1_params,
)
from .environments import BanditEnv, gen_lower_bound_instance, gen_system_tensor
from .projection import ProjectionMap, build_projection, project_action, project_system, q_of
from .regression import MeasurementDataset, fit_als, fit_ridge_hosvd
from .tensor_core import fold, inner, matricize, mode_n_product, multi_mode_product, vectorize
from .tucker import TuckerDecomp, hosvd, min_mode_singular_value, multilinear_rank

__version__ = "0.1.0"
