"""Cavity-mediated quantum secret sharing: state-vector core, cavity model,
protocol orchestration, adversary scenarios, and a reproducible CLI."""

__version__ = "0.1.0"

from .states import (
    DensityMatrix,
    MeasurementRecord,
    PureState,
    apply_unitary,
    fidelity_up_to_phase,
    partial_trace,
    project,
    sample_measurement,
    tensor,
)
from .cavity import (
    CavityParams,
    InteractionSchedule,
    ValidationReport,
    effective_unitary,
    full_evolution,
    full_hamiltonian,
    validate_effective,
)
from .protocol import (
    CorrectionTable,
    PartyLayout,
    ProtocolTranscript,
    SecretAmplitudes,
    derive_correction_table,
    prepare_initial,
    run_distribution,
    run_exhaustive,
    run_full_trial,
    run_recovery,
)
from .security import (
    SecurityReport,
    SecurityScenario,
    run_check_rounds,
    simulate_scenario,
)
