"""spinpulse: dissipative collective-spin pulse simulator.

Four dynamical backends over one shared Dicke-basis algebra:

- ``meanfield``     semiclassical Bloch-sphere angles
- ``cumulant``      second-order (Gaussian) moment closure
- ``lindblad``      exact density-matrix master equation
- ``trajectories``  Monte-Carlo wave-function unraveling

plus fluctuation observables (spin Q-function, deformation parameter,
correlation totals), a piecewise-linear parameter quench, and a CLI for
scenario/sweep runs (``spinpulse --help``).
"""

from .meanfield import (
    BlochAngles,
    MeanFieldTrajectory,
    equator_crossing_time,
    integrate_meanfield,
    meanfield_rhs,
    rabi_frequency,
)
from .cumulant import (
    CumulantTrajectory,
    MomentState,
    closure3,
    cumulant_from_moments,
    integrate_cumulant2,
    moment_rhs,
)
from .lindblad import LindbladResult, evolve, hamiltonian, lindblad_rhs
from .observables import (
    CorrelationReport,
    QGrid,
    c_total,
    chi_squared,
    cn_total_symmetrized,
    correlation_report,
    moments_third,
    q_function,
)
from .schedule import RampSchedule, params_at
from .spin_algebra import (
    CollectiveOperators,
    ModelParams,
    build_operators,
    coherent_state,
    expectation,
    projector,
)
from .trajectories import (
    EnsembleMoments,
    TrajectoryConfig,
    TrajectoryRecord,
    ensemble_average,
    run_trajectory,
)

__version__ = "0.1.0"
