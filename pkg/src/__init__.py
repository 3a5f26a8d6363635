# STB Trust Sim - Main Source Package
"""
Trusted set-top box simulator

crypto_envelope / stream_scrambler: keys, wire codec and broadcast scrambling
tpm_core / measured_boot: software TPM and boot measurement
pca_service / provider_services: head-end parties behind attestation
set_top_box / cas_engine: the box and its conditional access instances
sim_harness: scenario runner, network, adversaries and transcripts
"""

__version__ = "0.1.0"
