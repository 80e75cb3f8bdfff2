"""Graph-structured heterogeneous federated M-estimation.

A simulator library and CLI for jointly estimating per-device parameters
under a fused edge penalty: the penalized objective, a decentralized
stochastic ADMM solver (with a random-availability variant), edge selection
by multiple testing, the synthetic benchmark protocol, and baseline
estimators.
"""

from .admm import (
    ReferenceResult,
    SolveResult,
    SolverConfig,
    SolverState,
    message_audit,
    node_step,
    proximal_node_step,
    edge_step,
    reference_minimizer,
    run,
)
from .availability import (
    AvailabilityModel,
    estimate_p,
    ipw_node_step,
    run_with_availability,
    sample_availability,
)
from .baselines import (
    avg_sq_error,
    fed_admm_es_estimate,
    fed_admm_estimate,
    fed_admm_local_es_estimate,
    fit_all,
    global_estimate,
    local_all,
    oracle_estimate,
    subgradient_solver,
)
from .chi2 import chi2_cdf, chi2_quantile, chi2_sf
from .edge_selection import (
    EdgeTestReport,
    evaluate_edges,
    local_es_candidate_graph,
    min_signal_satisfied,
    select_edges,
    signal_distance,
    test_statistic,
)
from .graph import (
    Clustering,
    DeviceGraph,
    algebraic_connectivity_sq,
    brute_force_min_partition,
    build_graph,
    characteristic_graph,
    compat_factor_lower_bound,
    connected_components,
    corrupt_graph,
    graph_fidelity,
    incidence_matrix,
    optimal_subgraph_value,
)
from .linalg import NumericError
from .models import (
    DeviceData,
    LocalFit,
    ModelSpec,
    empirical_hessian,
    grad_psi,
    hessian_eigen_diagnostics,
    local_estimate,
    loss,
)
from .penalty import edge_prox, fused_penalty, objective, phi, prox_phi
from .synth import SynthConfig, SynthDataset, build_dataset, gen_clusters, gen_device_data, gen_parameters

__version__ = "0.1.0"
