"""
SNR sweep from the command line
===============================

The ``semantic-turbo`` entry point drives the same code as the library.
This script calls it in-process with the weights from
``train_autoencoder.py``: it renders the parity-check matrix, writes a few
test images and runs a short paired sweep, then prints the aggregate CSV.
The equivalent shell commands are::

    semantic-turbo render-h --output H.alist
    semantic-turbo make-data --output data --train-images 0 --test-images 8
    semantic-turbo sweep --config sweep.cfg --weights demo.semw --dataset data --csv sweep.csv
"""

from pathlib import Path

from semantic_ic.cli import main

work = Path("demo_output")

###############################################################################
# Every option can also live in a flat config file; flags override it.
config = work / "sweep.cfg"
config.write_text(
    "# short desk run\n"
    "images = 2\n"
    "rounds = 4\n"
    "snr-from = -1\n"
    "snr-to = 1\n"
)

steps = [
    ["render-h", "--output", str(work / "H.alist")],
    ["make-data", "--output", str(work / "sweep_data"), "--train-images", "0", "--test-images", "8"],
    ["sweep", "--config", str(config), "--weights", str(work / "demo.semw"),
     "--dataset", str(work / "sweep_data"), "--csv", str(work / "sweep.csv")],
]
for argv in steps:
    status = main(argv)
    print(f"{argv[0]:10s} exit {status}")
    assert status == 0

print()
print((work / "sweep_summary.csv").read_text())
