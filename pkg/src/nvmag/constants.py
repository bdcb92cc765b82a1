"""Physical constants and reference values for the four-axis NV magnetometer."""

import numpy as np

#: g_e * mu_B / h, the NV electron gyromagnetic ratio in Hz/T.
GAMMA_E = 28.03e9

#: Elementary charge (C).
Q_E = 1.602176634e-19

#: Nominal zero-field splitting (Hz).
D_NOMINAL = 2.87e9

#: Temperature coefficient of D (Hz/K). Documentation only; not used in any model.
DD_DT = -74e3

# Bias point from the demonstration device.
BIAS_FIELD = np.array([3.54e-3, 1.73e-3, 6.95e-3])
ZFS_D = 2.8692e9
STRAIN_MZ = np.array([-20e3, -60e3, 50e3, 30e3])

#: Measured ODMR line centers (Hz), ordered kappa-, lambda-, phi-, chi-, chi+, phi+, lambda+, kappa+.
ODMR_LINE_CENTERS = np.array(
    [2.6825, 2.7314, 2.8193, 2.8622, 2.9272, 2.9655, 3.0351, 3.0692]
) * 1e9

# Per-channel settings, orientation order lambda, chi, phi, kappa.
CARRIERS = np.array([2.731e9, 2.862e9, 2.966e9, 3.069e9])
MOD_FREQS = np.array([4056.0, 2704.0, 5070.0, 3380.0])
DEVIATIONS = np.array([832e3, 828e3, 775e3, 1178e3])
#: Lock-in slopes (V/Hz); 39.5 uV/kHz etc.
LOCKIN_SLOPES = np.array([39.5, 42.0, 53.4, 41.6]) * 1e-9

SAMPLE_RATE = 202_800.0
OUTPUT_RATE = 2704.0
HYPERFINE_SPLITTING = 2.158e6
I_SIG = 24.1e-3
I_REF = 30.1e-3
R_SIG = 300.0
R_REF = 270.0

# Demodulation chain.
HIGHPASS_CUTOFF = 1690.0
BAND_EDGES = (5.0, 210.0)
NOTCH_FREQS = (49.0, 50.0, 60.0, 338.0)
NOMINAL_ENBW = 203.0

# Applied coil test fields: frequency (Hz) and RMS amplitude (T) per lab axis.
COIL_FREQS = np.array([67.0, 32.0, 18.0])
COIL_RMS = np.array([8.12e-9, 9.56e-9, 9.86e-9])

#: Reference sensing matrix (dimensionless; multiply by GAMMA_E for Hz/T).
SENSING_MATRIX = np.array([
    [0.10388, -0.89383, -0.46341],
    [0.90435, 0.04596, -0.38836],
    [0.10524, -0.69511, 0.73528],
    [0.75551, 0.04984, 0.66268],
])

#: Reference pseudoinverse (dimensionless; divide by GAMMA_E for T/Hz).
SENSING_PINV = np.array([
    [0.08016, 0.69252, -0.02239, 0.48676],
    [-0.71456, 0.05848, -0.50880, 0.09912],
    [-0.39850, -0.37710, 0.51861, 0.43394],
])

# Shot-noise reference figures.
MIN_SHIFTS = np.array([0.632, 0.594, 0.468, 0.600])
ETA_SHOT = np.array([18.1e-12, 18.4e-12, 17.5e-12])
#: Measured zero-signal sensitivities (T/sqrt(Hz)); comparison band only.
ETA_MEASURED = np.array([57e-12, 46e-12, 45e-12])
