"""Two-cell processing with CSI-only cooperation: channels, information measures,
power and precoder design, and the uplink/downlink round simulation."""

from .channel import (ArModel, ChannelMatrix, EstimatedChannel, FrameConfig, ar_path, ar_step,
                      predict_block, read_channel_trace, sample_channel, write_channel_trace)
from .estimation import MmseMatrix, mmse_matrix, posterior_mean, scalar_mi, scalar_mmse
from .information import (GradientPair, RateValue, grad_power_conditional,
                          grad_power_int_noise, grad_power_joint, mi_conditional,
                          mi_discrete_sum, mi_gaussian_sum, mi_interference_as_noise, mi_mixed,
                          mi_sum)
from .inputs import (InputSpec, PowerProfile, gaussian_quadrature_input, input_from_name,
                     load_constellation, pam, qam, save_constellation)
from .optimize import (DesignOutcome, IterationSchedule, KktReport, Multipliers, PrecoderPair,
                       ensemble_kkt, fixed_point_power, fixed_point_precoder, gaussian_power,
                       kkt_certificate, mimo_precoder, select_design, solve_mac, svd_init,
                       tune_multipliers)
from .quadrature import AccuracyWarning, IntegrationEngine
from .sim import (BackhaulConfig, BsState, Scenario, SimTrace, SolverConfig, dl_round,
                  run_trace, simulate_dl, ul_round)

__version__ = "0.1.0"
