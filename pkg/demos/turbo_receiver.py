"""
One image through the turbo receiver
====================================

Send a test image over AWGN at 0 dB and decode it twice on the same noise:
once with the semantic stage in the loop and once as the plain LDPC
baseline. Run ``train_autoencoder.py`` first, or pass any weights file
(for example from ``semantic-turbo train``) as the first argument.
"""

import sys
from pathlib import Path

from semantic_ic import autoencoder as ae
from semantic_ic import dataio, ldpc, turbo
from semantic_ic.phy import SnrConfig

work = Path("demo_output")
weights = sys.argv[1] if len(sys.argv) > 1 else work / "demo.semw"
codec = ae.SemanticCodec.load(weights)
data = dataio.write_synthetic_cifar10(work / "turbo_data", n_train=0, n_test=4, seed=7)

code = ldpc.systematize(ldpc.construct_regular_code(ldpc.CodeSpec()))
image = dataio.load_images(data, "test", 1)[0]

###############################################################################
# 221,184 bits become 735 blocks of k=301 message bits, 51 of them padding.
tx = turbo.transmit_image(image, code, SnrConfig(0.0), seed=0, image_index=0)
print("blocks:", tx.frame.block_count, " padding bits:", tx.frame.padding)

cfg = turbo.TurboConfig()
ic = turbo.decode_transmission(tx, code, codec, cfg, keep_images=True)
base = turbo.decode_transmission(tx, code, None, turbo.TurboConfig(alpha=0.0))

###############################################################################
# Per-round trace. The baseline never changes because it sees the same
# inputs every round.
print("\nround   ber_ic   ber_noic   ed_ic   ed_noic  psnr_ic  ed_sem")
for r_ic, r_no in zip(ic.trace, base.trace):
    print(f"{r_ic.round:5d}  {r_ic.ber:.5f}  {r_no.ber:.5f}  {r_ic.ed:7.0f}  {r_no.ed:7.0f}"
          f"  {r_ic.psnr:6.2f}  {r_ic.ed_sem:6.0f}")

out = work / "images"
out.mkdir()
dataio.write_image(image, out / "source.png")
dataio.write_image(base.image, out / "noIC.png")
dataio.write_image(ic.image, out / "IC.png")
dataio.write_image(ic.semantic_image, out / "Sem.png")
print("\nimages written to", out)
