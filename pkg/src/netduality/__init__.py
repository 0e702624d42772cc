"""Target controllability, functional observability and their duality for
linear systems ``x' = A x + B u``, ``y = C x`` with a target ``z = F x``."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DimensionError,
    InfeasibleError,
    InputError,
    MatrixFormatError,
    NetDualityError,
    NotHurwitzError,
    NumericalError,
    UndefinedEnergyError,
    ValidationError,
)
from .numkernel import DEFAULT_TOL, ToleranceConfig, Trajectory, integrate_lti  # noqa: E402
from .system import SystemBundle  # noqa: E402
from .duality import (  # noqa: E402
    INFINITE,
    DualityReport,
    GramianSplit,
    ctrb_matrix,
    duality_report,
    finite_horizon_gramians,
    gramian_split,
    infinite_horizon_gramian,
    is_functionally_observable,
    is_output_controllable,
    obsv_matrix,
)
from .energy import (  # noqa: E402
    EnergyReport,
    energy_report,
    estimability_condition,
    target_control_energy,
    target_observation_energy,
)
from .targetctl import (  # noqa: E402
    FeedbackDesign,
    MeasurementRecord,
    min_energy_control,
    place_target_poles,
    reconstruct_target,
    setpoint_feedforward,
    sigma_set,
    staircase_decompose,
)
from .observer import (  # noqa: E402
    ClosedLoop,
    FunctionalObserver,
    assemble_closed_loop,
    simulate_closed_loop,
    synthesize_functional_observer,
)
from .networks import (  # noqa: E402
    AdjacencySpec,
    NetworkSystem,
    SweepConfig,
    SweepResult,
    build_network_system,
    generate_adjacency,
    run_sweep,
)
