#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package (10,000 samples,
pixels pre-scaled to [0,1]) into gzipped big-endian IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

Samples are interleaved with a fixed permutation so `--limit N` takes a
class-balanced prefix.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(len(data) // 784):
            px = bytes(round(v * 255) for v in data[i * 784:(i + 1) * 784])
            samples.append((px, digit))
    random.Random(20240601).shuffle(samples)

    dst.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    images = struct.pack(">IIII", 2051, n, 28, 28) + b"".join(s[0] for s in samples)
    labels = struct.pack(">II", 2049, n) + bytes(s[1] for s in samples)
    for name, payload in (("images-idx3-ubyte.gz", images), ("labels-idx1-ubyte.gz", labels)):
        with open(dst / name, "wb") as raw:
            with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
                gz.write(payload)
    print(f"wrote {n} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
