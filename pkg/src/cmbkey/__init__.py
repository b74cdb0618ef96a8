"""Simulated CMB skies as a source of cryptographic key material.

Pipeline: band-limited Gaussian sky realizations -> harmonic analysis and
pseudo cross-spectra -> spectral binning -> Gaussian likelihoods and noise
separation -> sub-noise bit harvesting with FIPS 140-2 health tests -> XOR
key construction and a one-time-pad cipher with an n x n key matrix.
"""

from .grid import GaussLegendreGrid, SkyMask, band_mask, full_sky_mask
from .skysim import (
    AngularSpectrum,
    SkyMap,
    ToyModelParams,
    add_noise,
    apply_mask,
    fiducial_spectrum,
    synthesize_alm,
    synthesize_map,
)
from .harmonics import (
    BinnedSpectrum,
    BinningScheme,
    CrossSpectrumSet,
    HarmonicCoeffs,
    PseudoSpectrum,
    analyze_map,
    bin_spectrum,
    cross_spectrum_set,
    effective_modes,
    make_binned_spectrum,
    make_binning,
    pseudo_cross_spectrum,
)
from .likelihood import (
    NoiseEstimate,
    binned_loglike,
    estimate_noise_and_signal,
    exact_loglike,
    kullback,
)
from .entropy import (
    BitStream,
    ExtractionPolicy,
    agreement_fraction,
    combine_keys,
    fips_all,
    fips_longrun,
    fips_monobit,
    fips_poker,
    fips_report,
    fips_runs,
    generator_stream,
    harvest_bits,
    von_neumann,
)
from .vernam import (
    KeyMatrix,
    LedgerConflictError,
    PadExhaustedError,
    PadLedger,
    base_for_length,
    generate_key_matrix,
    inverse_substitute,
    key_sum,
    substitute,
    vernam_decrypt,
    vernam_encrypt,
)
from .pipeline import RunConfig, eve_agreement, harvest_stream, measure_binned, model_bins
from .rng import MixingGenerator, derive_seed, mix64

__version__ = "0.1.0"
