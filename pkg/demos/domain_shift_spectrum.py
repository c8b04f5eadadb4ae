"""
Where do the two synthetic domains differ?
==========================================

``domA`` is sharp and clean, ``domB`` is slightly blurred, brightened, tilted
by a smooth bias field and carries fine noise.  The same seed renders the
same anatomy in both, so a matched pair isolates the domain shift.

The frequency analysis compares the pair in image space and band by band in
the Hamming-windowed, center-shifted magnitude spectrum.
"""

import json

from freqmatch import analysis
from freqmatch.data import render_phantom

a, mask_a = render_phantom(2, "domA", seed=11)
b, mask_b = render_phantom(2, "domB", seed=11)
print("same mask in both domains:", bool((mask_a == mask_b).all()))

report = analysis.analyze_frequency(a, b)
print(json.dumps({"spatial": report["spatial"], "spectral": report["spectral"]}, indent=2))

# The mid band should be the closest of the three.
nmse = {k: report["spectral"][k]["nmse"] for k in ("low", "mid", "high")}
print("per-band spectral NMSE:", {k: round(v, 4) for k, v in nmse.items()})

# Over many pairs the generator certifies this property, which is what
# treating the mid band as domain-agnostic relies on.
cert = analysis.certify_band_locality(n_pairs=100, seed=0)
print(f"mid band closest on {cert['fraction']:.0%} of {cert['pairs']} matched pairs")
print(f"outside-mid : inside-mid spectral difference ratio {analysis.band_difference_ratio():.1f}")
