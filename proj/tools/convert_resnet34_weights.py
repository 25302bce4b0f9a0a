#!/usr/bin/env python3
# Copyright 2026 The m11seg Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert a torchvision ResNet-34 state dict into an m11seg weight archive.

The archive keeps torchvision's tensor names (conv1.weight, layer3.4.bn2.running_var,
...) and drops the classifier (fc.*). Usage:

    convert_resnet34_weights.py resnet34-b627a593.pth encoder.m11w
    convert_resnet34_weights.py --torchvision encoder.m11w   # download via torchvision
    convert_resnet34_weights.py --random encoder.m11w        # untrained, for tests
"""

import argparse
import json
import os
import struct
import sys
import tempfile

MAGIC = b"M11SEGW1"


def write_archive(path, tensors, header):
    import torch

    blob = bytearray(MAGIC)
    h = json.dumps(header, sort_keys=True).encode()
    blob += struct.pack("<Q", len(h)) + h
    blob += struct.pack("<Q", len(tensors))
    for name, t in tensors:
        t = t.detach().cpu().contiguous()
        if t.dtype == torch.int64:
            code = 1
        else:
            t = t.to(torch.float32)
            code = 0
        n = name.encode()
        blob += struct.pack("<Q", len(n)) + n
        blob += struct.pack("<BB", code, t.dim())
        blob += struct.pack("<%dq" % t.dim(), *t.shape)
        blob += t.numpy().tobytes()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)) or ".")
    with os.fdopen(fd, "wb") as f:
        f.write(blob)
    os.chmod(tmp, 0o644)
    os.replace(tmp, path)


def load_state(args):
    import torch

    if args.random:
        import torchvision

        torch.manual_seed(args.seed)
        return torchvision.models.resnet34(weights=None).state_dict(), "random"
    if args.torchvision:
        import torchvision

        w = torchvision.models.ResNet34_Weights.IMAGENET1K_V1
        return torchvision.models.resnet34(weights=w).state_dict(), str(w)
    state = torch.load(args.input, map_location="cpu", weights_only=True)
    if "state_dict" in state:
        state = state["state_dict"]
    return state, os.path.basename(args.input)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("input", nargs="?", help="torchvision .pth state dict")
    p.add_argument("output", help="archive to write")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--torchvision", action="store_true", help="fetch ImageNet weights through torchvision")
    g.add_argument("--random", action="store_true", help="untrained torchvision initialization")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if not (args.input or args.torchvision or args.random):
        p.error("give a .pth file, --torchvision or --random")

    state, source = load_state(args)
    tensors = [(k, v) for k, v in state.items() if not k.startswith("fc.")]
    if not any(k == "layer4.2.bn2.weight" for k, _ in tensors):
        sys.exit("error: state dict does not look like a ResNet-34 (no layer4.2.bn2.weight)")
    write_archive(args.output, tensors, {"architecture": "resnet34", "source": source})
    print("wrote %d tensors to %s" % (len(tensors), args.output))


if __name__ == "__main__":
    main()
