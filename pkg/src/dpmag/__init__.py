"""Simulator and estimation toolkit for a double-pass continuously-measured
atomic magnetometer: conditional filter integration, quantum Fisher
information by finite differences over shared noise, and the uncertainty
scaling experiments built on top."""

__version__ = "0.1.0"

from .filtering import (
    FilterError,
    FilterIncrement,
    FilterParams,
    PositivityError,
    dissipator,
    euler_step,
    filter_increment,
    measurement_superop,
)
from .fisher import (
    QfiEstimate,
    SldMatrix,
    analytic_unitary_qfi,
    conditional_qfi,
    ensemble_qfi,
    reference_bounds,
    sld_finite_difference,
)
from .experiments import (
    KOptResult,
    ScalingFit,
    SweepConfig,
    SweepRow,
    detect_saturation,
    optimize_K,
    powerlaw_fit,
    qfi_point,
    run_sweep,
    scaling_params,
    triple_qfi_sample,
)
from .spin import (
    DensityMatrix,
    SpinError,
    SpinOperators,
    SpinQuantum,
    build_spin_operators,
    cat_state_y,
    coherent_state_x,
    expectation,
    min_eigenvalue,
    purity,
    variance,
)
from .trajectories import (
    CoupledTriple,
    MeasurementRecord,
    NoiseSource,
    TrajectoryError,
    TrajectoryOutput,
    coupled_triple,
    filter_along_record,
    generate_record,
)
