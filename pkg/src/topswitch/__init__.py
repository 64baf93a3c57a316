"""Second-order multi-agent consensus under strategic topology switching:
zero-dynamics attack synthesis, switching schedules and observer-based
detection."""

from .graph import (WeightedGraph, TopologySet, laplacian, spectrum, difference_graph,
                    union_difference_graph, components, detectability_check,
                    spectral_ratio_check, distinct_eigenvalue_check)
from .dynamics import (assemble_system, system_matrix, output_matrix, step_exact, simulate,
                       consensus_error, Forcing, Trajectory)
from .switching import (DwellTimeParams, SwitchSchedule, period, dwell_time, dwell_times,
                        suggest_dwell_params, build_schedule, matrix_measure, lyapunov_weight,
                        matrix_measure_certificate, certified_dwell_multipliers)
from .attack import (ZdaPlan, rosenbrock_matrix, observability_kernel, stealth_subspace,
                     synthesize_zda, select_attack_start, plan_attack_start, attack_signal,
                     certify_plan)
from .observer import (ObserverConfig, observer_matrix, hurwitz_check, run_observer, detect)

__version__ = "0.1.0"
