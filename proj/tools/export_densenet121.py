#!/usr/bin/env python3
"""Export torchvision's pretrained DenseNet-121 into a bsc checkpoint.

The counting models default to the fast offline tiny64 backbone; to count
with pretrained DenseNet-121 features, run this once and pass
--backbone densenet121:weights=densenet121.ckpt to train-counter.

Usage:
    python3 tools/export_densenet121.py [--out densenet121.ckpt]

Requires torch + torchvision with download access to the pretrained weights.
"""

import argparse
import json
import struct


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="densenet121.ckpt")
    args = parser.parse_args()

    import torchvision  # deferred so --help works without torch

    model = torchvision.models.densenet121(weights="IMAGENET1K_V1")
    state = model.state_dict()

    tensors = []
    blobs = []
    offset = 0
    for name, tensor in state.items():
        if not name.startswith("features."):
            continue  # the classifier head is not used for feature extraction
        if name.endswith("num_batches_tracked"):
            continue
        data = tensor.detach().double().numpy().ravel()
        tensors.append(
            {
                "name": name,
                "shape": list(tensor.shape),
                "offset": offset,
                "count": int(data.size),
            }
        )
        blobs.append(data.tobytes())
        offset += int(data.size)

    header = {
        "format_version": 1,
        "kind": "densenet121-weights",
        "meta": {"source": "torchvision densenet121 IMAGENET1K_V1"},
        "tensors": tensors,
    }
    payload = json.dumps(header).encode()
    with open(args.out, "wb") as f:
        f.write(b"BSCKPT01")
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for blob in blobs:
            f.write(blob)
    print(f"wrote {args.out}: {len(tensors)} tensors, {offset * 8 / 1e6:.1f} MB")


if __name__ == "__main__":
    main()
