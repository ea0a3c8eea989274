#!/usr/bin/env python3
"""Convert the digit JSON files of the `mnist` npm package into gzipped IDX files.

Usage: npm_mnist_to_idx.py <package/src/digits> <out_dir>

The npm package stores 1,000 MNIST digits per class as floats in [0, 1]
with three decimals; they are mapped back to bytes with round(v * 255).
Samples are interleaved with a fixed permutation so the output is not
sorted by class.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        n = len(raw) // 784
        for i in range(n):
            px = bytes(min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(20190101).shuffle(samples)
    out.mkdir(parents=True, exist_ok=True)
    images = struct.pack(">IIII", 0x00000803, len(samples), 28, 28) + b"".join(p for p, _ in samples)
    labels = struct.pack(">II", 0x00000801, len(samples)) + bytes(d for _, d in samples)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(images)
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(labels)
    print(f"wrote {len(samples)} samples to {out}")


if __name__ == "__main__":
    main()
