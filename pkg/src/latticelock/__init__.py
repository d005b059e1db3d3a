"""latticelock: trapped-ion optical-lattice phase stabilization simulator.

Subsystems
----------
lattice   lattice geometry, light-shift field, motional-state primitives
echo      analytic and Monte Carlo exposure-signal models, readout sampling
lock      closed-loop phase stabilization through the positioning feedthrough
kicks     spin-dependent displacement kicks and sideband readout
mapping   segmented-trap electrostatics and wide-range position-map fitting
cli       deterministic experiment orchestration and file output
"""

__version__ = "0.1.0"

from .echo import (
    EchoConfig,
    MeasurementOutcome,
    contrast_loss,
    echo_signal_fock,
    echo_signal_pure,
    echo_signal_thermal,
    monte_carlo_echo,
    sample_measurement,
)
from .fockspace import TruncationError
from .kicks import (
    CoherentDisplacement,
    KickSchedule,
    SidebandReadout,
    coherence_factor,
    combine_kicks,
    displaced_thermal_populations,
    electrical_kick,
    optical_kick,
    sideband_probe,
    static_sw_displacement,
)
from .lattice import (
    IonState,
    MotionalState,
    PhysicalParams,
    StandingWaveField,
    lamb_dicke_element,
    lattice_period,
    stark_shift,
    thermal_weights,
)
from .lock import (
    CompositeDrift,
    DriftStep,
    LinearRamp,
    LockConfig,
    LockTrace,
    RandomWalk,
    error_signal,
    residual_stats,
    run_lock,
    shot_noise_limit,
)
from .mapping import (
    FitConvergenceError,
    ModelError,
    PolynomialMap,
    ScanPlan,
    ScanRecord,
    SegmentPotentialModel,
    compare_to_electrostatics,
    equilibrium_position,
    fit_polynomial_map,
    scan_signal,
)
