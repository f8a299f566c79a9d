"""Reference constants produced by offline oracle scripts.

Each value records how it was obtained so it can be regenerated.
"""

# Haar mean of #{primitive v : |v| <= 1} (both signs) on unimodular lattices in R^2.
# Source: scripts/siegel_reference.py 20000000 20240601 1.0
#   Monte Carlo over the fundamental domain |x| <= 1/2, |x + iy| >= 1 with
#   measure dx dy / y^2; output mean=1.909898 stderr=0.000093.
# Closed form vol(B_1) / zeta(2) = 6 / pi = 1.909859..., within 0.5 stderr.
SIEGEL_D2_R1 = 1.909898
SIEGEL_D2_R1_STDERR = 0.000093
SIEGEL_D2_R1_SAMPLES = 20_000_000
