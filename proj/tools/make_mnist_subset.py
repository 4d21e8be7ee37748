#!/usr/bin/env python3
"""Writes the 5,000-image MNIST subset bundled with mlxtend as IDX files.

The subset holds 500 images per digit (28x28, 8-bit). Source data is the
MNIST database (Y. LeCun, C. Cortes, C. Burges), redistributed in mlxtend
as data/mnist_5k.csv.gz.

Usage:
    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import gzip
import io
import pathlib
import struct
import sys
import zipfile

import numpy as np


def main(argv):
    if len(argv) != 3:
        print(__doc__)
        return 2
    wheel, out_dir = pathlib.Path(argv[1]), pathlib.Path(argv[2])
    with zipfile.ZipFile(wheel) as z:
        raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.genfromtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    images = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.tobytes())
    with open(out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())
    print(f"wrote {len(images)} images to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
