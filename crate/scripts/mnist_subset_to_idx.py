#!/usr/bin/env python3
"""Convert the digits bundled with the `mnist` npm package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist 5000

The npm package stores 28x28 digits as JSON arrays of pixel intensities in
[0, 1] (rounded to three decimals), one file per class. Images are taken
round-robin across classes so any prefix is class-balanced, rescaled to
bytes, and written as big-endian IDX (magic 0x00000803 / 0x00000801).
"""
import json
import os
import struct
import sys


def main():
    src, dst, count = sys.argv[1], sys.argv[2], int(sys.argv[3])
    per_class = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        per_class.append([flat[i:i + 784] for i in range(0, len(flat), 784)])

    images, labels = [], []
    row = 0
    while len(images) < count:
        for digit in range(10):
            if row < len(per_class[digit]) and len(images) < count:
                images.append(per_class[digit][row])
                labels.append(digit)
        row += 1

    os.makedirs(dst, exist_ok=True)
    with open(os.path.join(dst, f"mnist-{count}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))
    with open(os.path.join(dst, f"mnist-{count}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


if __name__ == "__main__":
    main()
