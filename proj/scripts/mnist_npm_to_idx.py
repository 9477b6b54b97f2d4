#!/usr/bin/env python3
"""Convert the digit JSON files shipped in the `mnist` npm package to IDX.

The npm package (https://www.npmjs.com/package/mnist, MIT) bundles about
1000 MNIST images per digit as flat 28x28 arrays scaled to [0, 1] with three
decimals. This script writes them back out as a standard IDX image/label pair
so the C++ loader can ingest them like the original distribution files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_npm_to_idx.py package/src/digits data/mnist --digits 0,1,2
"""

import argparse
import json
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--digits", default="0,1,2")
    args = ap.parse_args()

    per_digit = {}
    for d in [int(s) for s in args.digits.split(",")]:
        flat = json.loads((args.digits_dir / f"{d}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        per_digit[d] = [flat[i : i + 784] for i in range(0, len(flat), 784)]

    # Interleave classes so any prefix of the file holds a class mix.
    images, labels = [], []
    longest = max(len(v) for v in per_digit.values())
    for i in range(longest):
        for d, imgs in sorted(per_digit.items()):
            if i < len(imgs):
                images.append(bytes(min(255, max(0, round(v * 255))) for v in imgs[i]))
                labels.append(d)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(args.out_dir / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images")


if __name__ == "__main__":
    main()
