"""qgflow: quantum dynamics on metric graphs and the piecewise-deterministic
trajectory process whose random vertex turns keep the ensemble |psi|^2
distributed."""

__version__ = "0.1.0"

from .graph import (
    Automorphism,
    Edge,
    GraphError,
    GraphSpec,
    MetricGraph,
    SpecError,
    VertexCondition,
    enumerate_isometries,
    parse_spec,
    validate_graph,
)
from .hamiltonian import (
    Grid,
    HamiltonianMatrix,
    assemble_hamiltonian,
    build_grid,
    check_hermitian,
)
from .propagate import (
    EvolutionRecord,
    WaveState,
    eigenstate,
    evolve,
    gaussian_packet,
    initial_state,
    step_crank_nicolson,
)
from .currents import (
    EdgeSelection,
    FluxReport,
    NodeEncounterError,
    StalledVertexError,
    current,
    density,
    edge_current,
    edge_selection,
    velocity,
    vertex_currents,
)
from .sampler import (
    EnsembleStats,
    Trajectory,
    equivariance_distance,
    impossibility_scenario,
    integrate_edge,
    sample_ensemble,
    sample_path,
    time_reversal_check,
    turn,
)
from .bell import (
    jump_rates,
    lattice_exit_ratio,
    restrict_record,
    sample_bell_path,
    vertex_exit_distribution,
)
from .almost_markov import (
    AlmostMarkovKernel,
    feasible_kernel,
    markovization_discrete,
    markovize,
)
