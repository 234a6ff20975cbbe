"""
SpecAugment masking
===================

Frequency and time masks with the standard policy (F=27, T=100, two
masks per axis), driven by keyed random streams.
"""

import numpy as np

from concat_augment import MaskPolicy, apply_masks, keyed_rng

rng = np.random.default_rng(0)
feats = rng.uniform(1.0, 2.0, size=(300, 80))

policy = MaskPolicy()
masked = apply_masks(feats, policy, keyed_rng(7, 3, 0, 42))

changed = masked != feats
full_cols = np.where(changed.all(axis=0))[0]
full_rows = np.where(changed.all(axis=1))[0]
print(f"masked {len(full_cols)} mel bins (<= {policy.n_freq_masks * policy.freq_param})")
print(f"masked {len(full_rows)} frames  (<= {policy.n_time_masks * policy.time_param})")
print(f"untouched cells identical: "
      f"{np.array_equal(masked[~changed], feats[~changed])}")

# The same key reproduces the same masks; a different instance index
# gives fresh ones. The pipeline keys each instance by
# (seed, epoch, instance ordinal).
again = apply_masks(feats, policy, keyed_rng(7, 3, 0, 42))
other = apply_masks(feats, policy, keyed_rng(7, 3, 0, 43))
print(f"same key identical: {np.array_equal(masked, again)}")
print(f"next instance differs: {not np.array_equal(masked, other)}")

# Counts of zero disable masking entirely.
identity = apply_masks(feats, MaskPolicy(n_freq_masks=0, n_time_masks=0), keyed_rng(1))
print(f"zero-mask policy is identity: {np.array_equal(identity, feats)}")
