"""
Splitting an image into low, mid and high frequency bands
=========================================================

Every feature map in the model is cut into three square spectral annuli.
This script shows the masks on a 30x30 grid, splits a phantom into its three
band components and checks that they add back up to the original.
"""

import numpy as np

from freqmatch import numerics
from freqmatch.data import render_phantom

# The masks partition the centered spectrum.  With ratios (0.3, 0.4, 0.3) a
# 30x30 grid puts 81 bins in the low band, 360 in the mid band and the
# remaining 459 (including the corners) in the high band.
masks = numerics.make_band_masks(30, (0.3, 0.4, 0.3))
print("bins per band:", {k: int(m.sum()) for k, m in masks.as_dict().items()})

# A coarse picture of the partition: 0 = low, 1 = mid, 2 = high.
labels = masks.mid * 1 + masks.high * 2
for row in labels[::3, ::3]:
    print("  " + " ".join(str(v) for v in row))

# Band-split a 64x64 phantom.  Each component is real because the masks are
# point-symmetric about the spectrum center.
img, mask = render_phantom(0, "domA", seed=3)
parts = numerics.band_split(img, numerics.make_band_masks(64))
for name, part in zip(("low", "mid", "high"), parts):
    print(f"{name:>4} band: energy {np.square(part).sum():9.2f}  range [{part.min():+.3f}, {part.max():+.3f}]")

# The split is lossless.
print("reconstruction error:", np.abs(sum(parts) - img).max())
