"""Tracer Token anonymous contact tracing.

Key schedule (:mod:`.crypto`), token state machine (:mod:`.token`), provider
signing (:mod:`.authority`), key-server network (:mod:`.server`) and the
proximity simulator (:mod:`.sim`, :mod:`.analysis`).
"""

from .analysis import notification_latency
from .authority import (
    DiagnosisKeySet,
    ProviderKeypair,
    build_diagnosis_key_set,
    sign,
    verify,
)
from .crypto import (
    ROLLING_PERIOD,
    RollingProximityIdentifier,
    SubnetworkSalt,
    TemporaryExposureKey,
    decrypt_metadata,
    derive_aemk,
    derive_rpi,
    derive_rpik,
    encrypt_metadata,
    generate_tek,
    interval_number,
    rpi_sequence,
)
from .server import Network, ServerNode, fetch, propagate_step, throughput_report
from .sim import Scenario, Transcript, load_scenario, run
from .token import ExposureEvent, ObservedPayload, TokenState

__version__ = "0.1.0"

__all__ = [
    "DiagnosisKeySet", "ExposureEvent", "Network", "ObservedPayload", "ProviderKeypair",
    "ROLLING_PERIOD", "RollingProximityIdentifier", "Scenario", "ServerNode", "SubnetworkSalt",
    "TemporaryExposureKey", "TokenState", "Transcript", "build_diagnosis_key_set",
    "decrypt_metadata", "derive_aemk", "derive_rpi", "derive_rpik", "encrypt_metadata",
    "fetch", "generate_tek", "interval_number", "load_scenario", "notification_latency",
    "propagate_step", "rpi_sequence", "run", "sign", "throughput_report", "verify",
]
