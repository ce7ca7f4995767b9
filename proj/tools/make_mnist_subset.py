#!/usr/bin/env python3
"""Convert the digits bundled in the `mnist` npm package (10,000 labelled
MNIST digits, pixel values scaled to [0, 1]) into IDX files.

Usage: make_mnist_subset.py <package-dir> <out-dir>

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (9,000 images) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (1,000 images). The split is
a fixed shuffle so the output is reproducible.
"""
import json
import os
import random
import struct
import sys


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 8, 3]))
        f.write(struct.pack(">III", len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(bytes([0, 0, 8, 1]))
        f.write(struct.pack(">I", len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    samples = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for i in range(0, len(flat), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in flat[i:i + 784]]
            samples.append((pixels, digit))
    random.Random(20190917).shuffle(samples)
    os.makedirs(out, exist_ok=True)
    train, test = samples[:9000], samples[9000:10000]
    write_images(os.path.join(out, "train-images-idx3-ubyte"), [s[0] for s in train])
    write_labels(os.path.join(out, "train-labels-idx1-ubyte"), [s[1] for s in train])
    write_images(os.path.join(out, "t10k-images-idx3-ubyte"), [s[0] for s in test])
    write_labels(os.path.join(out, "t10k-labels-idx1-ubyte"), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
