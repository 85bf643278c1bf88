"""blockmf: mean-field approximation accuracy on stochastic block model graphs.

Simulates interaction Markov processes (SIR, catalyst, degree, or custom
rate tables) exactly on SBM graphs, solves the quenched/annealed NIMFA and
block-homogeneous mean-field ODEs, and measures how the approximation error
scales with graph size and density.
"""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    DegreeStats,
    Graph,
    SbmParams,
    SpectralEstimate,
    annealed_matrix_apply,
    degree_stats,
    graph_from_edges,
    load_graph,
    normalized_adjacency_apply,
    save_graph,
    sbm_generate,
    spectral_deviation,
)
from .process import (  # noqa: F401
    ClosedFormTag,
    ProcessSpec,
    preset_catalyst,
    preset_degree,
    preset_sir,
)
from .initcond import (  # noqa: F401
    HomogeneityReport,
    InitialCondition,
    homogeneity_statistic,
    ic_bernoulli_sample,
    ic_block_constant,
    ic_degree_proportional,
    ic_modularity_set,
    ic_perron,
    load_ic,
    save_ic,
)
from .simulate import (  # noqa: F401
    MasterSolution,
    TrajectorySample,
    gillespie_ensemble,
    gillespie_run,
    master_equation_solve,
    save_trajectories,
)
from .meanfield import (  # noqa: F401
    OdeSolution,
    annealed_nimfa_solve,
    bhmfa_solve,
    nimfa_solve,
)
from .analysis import (  # noqa: F401
    CatalystGapReport,
    DiagnosticsReport,
    ErrorReport,
    SweepResult,
    catalyst_closed_form_gap,
    d_from_alpha,
    degree_error_closed_form,
    diagnostics,
    error_estimate,
    scaling_sweep,
)
from ._util import CapacityError, ConfigError, NumericalError  # noqa: F401
