"""Versioned desk-scale tolerances for the verification experiments.

Every report echoes the profile it was judged against.  Bump the version when
any number changes so that stored reports stay interpretable.
"""

from __future__ import annotations

import copy

THRESHOLDS_VERSION = "1.0"

_DEFAULT = {
    # sup_x |c_n P(S_n = v | tau > n) - h p(v / c_n)| at the largest n
    "llt_normal_sup": 0.02,
    # relative slack allowed when requiring E(n) to be non-increasing across octaves
    "llt_normal_monotone_slack": 0.05,
    # Monte Carlo version (continuous models): sup over bins of |density error| at the largest n
    "llt_normal_mc_sup": 0.05,
    # max_x |r(n, x) - 1| in the small-deviation window
    "llt_small_ratio": 0.10,
    "llt_small_mc_ratio": 0.20,
    "llt_small_window_exp": 0.7,
    # |r(n_max) - 1| for non-oscillating ladder-epoch ratios
    "tau_local_ratio": 0.10,
    "tau_local_continuous_ratio": 0.02,
    # change of a residue-class ratio over its last period, for oscillating models
    "tau_local_stability": 0.02,
    # numerical slack on the separation lower bound of the Omega clusters
    "q_oscillation_slack": 1e-9,
    # clusters closer than this count as one value
    "q_cluster_merge": 1e-6,
    "identity_band": 0.30,
    "identity_se_multiplier": 2.0,
    "meander_sup_normal": 5e-3,
    "meander_exponent_normal": 0.05,
    "meander_exponent": 0.10,
    "meander_tv": 0.08,
    "meander_tv_heavy": 0.12,
    "factorization": 1e-9,
}

_STRICT_OVERRIDES = {
    "llt_normal_sup": 0.015,
    "llt_small_ratio": 0.07,
    "tau_local_ratio": 0.05,
    "tau_local_continuous_ratio": 0.01,
    "identity_band": 0.20,
    "meander_sup_normal": 2e-3,
    "meander_tv": 0.05,
    "factorization": 1e-11,
}

PROFILES = {
    "default": _DEFAULT,
    "strict": {**_DEFAULT, **_STRICT_OVERRIDES},
}


def thresholds(profile: str = "default") -> dict:
    """A fresh copy of the named profile, tagged with the table version."""
    if profile not in PROFILES:
        raise ValueError(f"unknown tolerance profile {profile!r}; choose from {sorted(PROFILES)}")
    out = copy.deepcopy(PROFILES[profile])
    out["profile"] = profile
    out["version"] = THRESHOLDS_VERSION
    return out
