"""Renyi-DP accounting for privacy amplification from hidden training randomness.

Submodules:

* ``rdp_math``     -- divergence bounds for the k-hot Gaussian mixture family.
* ``oracles``      -- brute-force quadrature / Monte-Carlo verification.
* ``accountant``   -- mechanism curves, composition, (eps, delta) conversion,
                      noise calibration, subsampling comparisons.
* ``training_sim`` -- deterministic desk-scale training simulator.
* ``cli``          -- the ``amplify-acct`` command line front end.
"""

__version__ = "0.1.0"
