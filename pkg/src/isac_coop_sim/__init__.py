"""Deterministic simulator for multi-BS cooperative ISAC sensing.

Synthesizes OFDM echo symbol grids over monostatic and bistatic links
with synchronization impairments, and implements data-level fusion,
signal-level cooperative active sensing, cross-correlation cooperative
active-and-passive sensing, and adjustable-beam space registration.
"""

from .scenario import (SPEED_OF_LIGHT, BsSite, LinkSpec, Numerology,
                       ScenarioConfig, SyncError, Target, config_hash,
                       derive_rng_stream, load_scenario, load_scenario_file,
                       serialize_scenario)
from .frame import TxFrame, generate_frame
from .channel import RxSymbolMatrix, bistatic_delay, bistatic_doppler, synthesize_echo
from .rdmap import (ChannelMatrix, Estimate, RangeDopplerMap, channel_quotient,
                    peak_estimate, range_doppler_map, refine_peak,
                    to_range_velocity)
from .data_fusion import (ConfidenceInterval, ConfidenceRegion,
                          build_confidence_interval, build_confidence_region,
                          multilaterate, weighted_average)
from .signal_fusion import (FusionResult, RefineParams, dense_grid_search,
                            hypothesis_score, iterative_refine,
                            steering_signature)
from .cscc import OffsetEstimate, compensate, cross_correlate, fuse_active_passive
from .beams import (ArrayGeometry, BeamWeights, PatternMetrics, SensingArea,
                    beam_efficiency, fused_gain, pattern, required_width,
                    steering_vector, synth_baba, synth_conventional)
from .experiments import (SweepResult, exp_fig5, exp_fig6, exp_fig7,
                          rmse, run_scenario)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
