"""Incomplete U-statistics from orthogonal-array designs (ICUDO).

The package builds orthogonal arrays, partitions data into equal groups,
draws design-based subsamples (plain and debiased), and compares the
resulting estimators with complete, random and divide-and-conquer ones.
"""

__version__ = "0.1.0"

from .designs import (  # noqa: E402
    OrthogonalArray,
    bush_oa,
    feasible_design,
    full_factorial_oa,
    permute_levels,
    verify_coincidence_free,
    verify_strength,
)
from .errors import (  # noqa: E402
    CapacityError,
    DataError,
    DomainError,
    FormatError,
    IcudoError,
    InfeasibleError,
    NotApplicableError,
)
from .estimators import complete_u, efficiency, incomplete_u, v_statistic  # noqa: E402
from .hoeffding import (  # noqa: E402
    HoeffdingComponents,
    bootstrap_delta,
    choose_design,
    estimate_gamma_sq,
    mse_complete,
)
from .kernels import KernelSpec, get_kernel  # noqa: E402
from .partition import DataSet, Partition, partition_dataset  # noqa: E402
from .sampling import DesignSample, dc_sample, icudo_debiased_sample, icudo_sample, icur_sample  # noqa: E402

__all__ = [
    "CapacityError", "DataError", "DataSet", "DesignSample", "DomainError", "FormatError",
    "HoeffdingComponents", "IcudoError", "InfeasibleError", "KernelSpec", "NotApplicableError",
    "OrthogonalArray", "Partition", "bootstrap_delta", "bush_oa", "choose_design", "complete_u",
    "dc_sample", "efficiency", "estimate_gamma_sq", "feasible_design", "full_factorial_oa",
    "get_kernel", "icudo_debiased_sample", "icudo_sample", "icur_sample", "incomplete_u",
    "mse_complete", "partition_dataset", "permute_levels", "v_statistic", "verify_coincidence_free",
    "verify_strength",
]
