"""Displaced number states of a trapped-ion motional mode: theory, kick simulation and tomography."""

__version__ = "0.1.0"

from .fock import (  # noqa: F401
    DiagonalDensity,
    DnsParams,
    PhononDistribution,
    convolve_preparation,
    count_ppd_zeros,
    displacement_operator_oracle,
    dns_ppd,
    mixed_dns_ppd,
    ppd_zero_locations,
)
from .sideband import CouplingConfig, RabiDataset, matrix_element, rabi_signal, synthesize_dataset  # noqa: F401
from .tomography import ReconstructionConfig, bootstrap_errors, extract_alpha, reconstruct  # noqa: F401
