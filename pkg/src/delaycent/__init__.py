"""delaycent: performance and centrality analysis of time-delay consensus networks.

Closed-form steady-state dispersion, node/link centrality indices, and
link weight sensitivities for first- and second-order linear consensus
dynamics with a uniform communication delay, under six structured noise
models, verified against quadrature and Monte Carlo oracles.
"""

from .centrality import (
    ALL_STRUCTURES,
    COMM_CHANNEL,
    DYNAMICS,
    EMITTER,
    MEASUREMENT,
    RECEIVER,
    SENSOR,
    AdversarialAllocation,
    NoiseSpec,
    NoiseStructure,
    StructureTag,
    adversarial_allocation,
    centrality_report,
    emitter_display_diagnostic,
    input_matrix,
    link_centrality,
    link_sensitivity,
    node_centrality,
    performance,
    scale_sweep,
    tau_sweep,
)
from .graph import (
    GraphError,
    GraphMatrices,
    GraphParseError,
    WeightedGraph,
    build_matrices,
    is_connected,
    parse_edge_list,
    scale_weights,
)
from .oracles import (
    SimConfig,
    SimResult,
    SimulationError,
    mc_node_centrality,
    mode_integral,
    simulate,
    simulate_second_order,
)
from .report import CentralityReport, rank_with_ties
from .secondorder import (
    SecondOrderConfig,
    SecondOrderStabilityError,
    f_integral,
    h_kernel,
    so_node_centrality,
    so_zero_delay_closed_form,
)
from .spectral import (
    DisconnectedGraphError,
    SpectralDecomposition,
    SpectralError,
    SpectralKernel,
    StabilityError,
    StabilityInfo,
    decompose,
    edge_quadratic_form,
    kernel,
    stability_margin,
)

__version__ = "0.1.0"
