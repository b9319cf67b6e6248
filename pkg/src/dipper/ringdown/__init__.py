"""Ringdown simulation and estimators."""
from .estimators import (
    DecayFit,
    FieldDecayPrediction,
    InsufficientSNR,
    extract_kappa_ext,
    fit_decay,
    photon_number,
    photons_from_input,
    photons_from_input_power,
    photons_from_output,
    photons_from_output_power,
    photons_short_pulse,
    predict_field_decay,
    reference_power,
    ring_power_at_pulse_end,
    spectral_weight,
    w0,
    w1,
)
from .model import CavityModel, JitterSpectrum, Pulse
from .simulate import (
    ShotEnsemble,
    apply_detector_bandwidth,
    boxcar_weights,
    load_ensemble,
    save_ensemble,
    simulate_ensemble,
    simulate_shot,
)

__all__ = [
    "CavityModel", "JitterSpectrum", "Pulse", "ShotEnsemble", "DecayFit",
    "FieldDecayPrediction", "InsufficientSNR",
    "simulate_shot", "simulate_ensemble", "apply_detector_bandwidth", "boxcar_weights",
    "save_ensemble", "load_ensemble", "fit_decay", "extract_kappa_ext",
    "reference_power", "ring_power_at_pulse_end", "photon_number", "photons_from_output",
    "photons_from_output_power", "photons_from_input", "photons_short_pulse",
    "photons_from_input_power", "spectral_weight", "w0", "w1", "predict_field_decay",
]
