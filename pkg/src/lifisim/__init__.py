"""Baseband simulator for laser-based LiFi links."""

__version__ = "0.1.0"

from .channel import ChannelModel, MeasuredProfile, apply_channel, reference_channel
from .dsp import Constellation, OfdmConfig, TimeWaveform, get_constellation, qam_demap, qam_map
from .errors import (
    ConfigurationError,
    EqualizationError,
    EstimationError,
    FramingError,
    LifiSimError,
    TrainingDivergedError,
)
from .link import LinkConfig, LinkReport, LinkSimulator, compare_equalizers, run_link
from .loading import LoadingPlan, adapt_to_target, estimate_channel, hughes_hartogs, required_snr
from .volterra import VolterraConfig, VolterraEqualizer, build_term_set, rls_train, volterra_apply
from .wdm import WdmPlan, aggregate, preset, run_wdm

__all__ = [
    "ChannelModel",
    "ConfigurationError",
    "Constellation",
    "EqualizationError",
    "EstimationError",
    "FramingError",
    "LifiSimError",
    "LinkConfig",
    "LinkReport",
    "LinkSimulator",
    "LoadingPlan",
    "MeasuredProfile",
    "OfdmConfig",
    "TimeWaveform",
    "TrainingDivergedError",
    "VolterraConfig",
    "VolterraEqualizer",
    "WdmPlan",
    "adapt_to_target",
    "aggregate",
    "apply_channel",
    "build_term_set",
    "compare_equalizers",
    "estimate_channel",
    "get_constellation",
    "hughes_hartogs",
    "preset",
    "qam_demap",
    "qam_map",
    "reference_channel",
    "required_snr",
    "rls_train",
    "run_link",
    "run_wdm",
    "volterra_apply",
]
