"""Fixed on-board beam-generation design and link-level evaluation for
multibeam satellite payloads."""

from .channel import (BOLTZMANN, SPEED_OF_LIGHT, BeamGeometry, Channel,
                      ChannelModelError, FadingDiag, FadingParams, GainMatrix,
                      NominalChannel, PerturbationSample, RfParams, UserDrop,
                      assemble_channel, build_gain_matrix, estimate_nominal,
                      hex_lattice, make_hex_geometry, normalize_gain,
                      sample_delta_ball, sample_fading, sample_user_drop)
from .design import (BeamMatrix, DesignError, EigPerturbation,
                     EigenGapError, InfeasibleAlphaError, RankDeficiencyError,
                     RobustSurrogate, check_orthonormal, design_adaptive,
                     design_perturbation_aware, design_reference,
                     design_robust, eig_perturb_first_order,
                     load_beam_matrix, orthonormalize_rows, robust_surrogate,
                     robustness_margin, save_beam_matrix)
from .harness import (Calibration, ChannelSampler, HarnessError, RunRecord,
                      calibrate, evaluate, substream, sweep_alpha,
                      write_manifest, write_records_csv)
from .linkproc import (Detector, ForwardLinkParams, LinkProcessingError,
                       LinkResult, Precoder, ReturnLinkParams, forward_mse,
                       forward_mse_mismatched, lmmse_detector,
                       onground_forward, onground_forward_mismatched,
                       onground_return, onground_return_mismatched,
                       return_mse, return_mse_mismatched, rzf_precoder,
                       sinr_forward)
from .metrics import (AllOutageError, MetricsError, MetricsSummary,
                      ModcodEntry, ModcodTable, availability,
                      dispersion_index, load_modcod_table, margin_report,
                      modcod_lookup, shannon, summarize)
from .scenario import (NominalConfig, Scenario, ScenarioError, SweepConfig,
                       load_packaged_scenario, load_scenario)

__version__ = "0.1.0"
