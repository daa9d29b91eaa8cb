"""Writes a small model in the converter's output layout.

Produces config.json, weights.axir and vocab.txt in the target directory
using only the standard library, so the C++ reader is checked against an
independent writer. Tensor values are a closed-form function of the tensor
name and element index; the C++ side recomputes them.
"""

import json
import math
import struct
import sys
from pathlib import Path

ALIGN = 64

CONFIG = {
    "n_layers": 2,
    "n_heads": 2,
    "d_model": 8,
    "d_head": 4,
    "d_ff": 16,
    "vocab_size": 12,
    "max_positions": 32,
    "ln_eps": 1e-12,
    "pooling": "cls",
    "similarity": "dot",
}

VOCAB = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "the", "a", "snow", "##fall",
         "nyc", "average", "city", "of"]


def required(c):
    d = c["d_model"]
    out = [("token_embedding", [c["vocab_size"], d]),
           ("position_embedding", [c["max_positions"], d]),
           ("embed_ln.gamma", [d]), ("embed_ln.beta", [d])]
    for layer in range(c["n_layers"]):
        p = f"layer.{layer}."
        for m in "qkvo":
            out.append((p + f"attn.{m}.weight", [d, d]))
            out.append((p + f"attn.{m}.bias", [d]))
        out += [(p + "ln1.gamma", [d]), (p + "ln1.beta", [d]),
                (p + "mlp.w1.weight", [d, c["d_ff"]]), (p + "mlp.w1.bias", [c["d_ff"]]),
                (p + "mlp.w2.weight", [c["d_ff"], d]), (p + "mlp.w2.bias", [d]),
                (p + "ln2.gamma", [d]), (p + "ln2.beta", [d])]
    return out


def value(name, i):
    seed = sum(name.encode()) % 1000
    v = 0.5 * math.sin(0.37 * i + 0.001 * seed)
    if name.endswith(".gamma"):
        v += 1.0
    return struct.unpack("<f", struct.pack("<f", v))[0]


def align_up(n):
    return (n + ALIGN - 1) // ALIGN * ALIGN


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = sorted(required(CONFIG))
    header, payloads, offset = {}, [], 0
    for name, shape in tensors:
        count = math.prod(shape)
        data = struct.pack(f"<{count}f", *(value(name, i) for i in range(count)))
        header[name] = {"byte_length": len(data), "byte_offset": offset,
                        "dtype": "f32", "shape": shape}
        payloads.append((offset, data))
        offset = align_up(offset + len(data))
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    text += b" " * (align_up(16 + len(text)) - 16 - len(text))
    blob = bytearray(b"AXIR" + struct.pack("<I", 1) + struct.pack("<Q", len(text)) + text)
    start = len(blob)
    for at, data in payloads:
        blob += b"\0" * (start + at - len(blob))
        blob += data
    blob += b"\0" * (start + offset - len(blob))
    (out / "weights.axir").write_bytes(bytes(blob))
    (out / "config.json").write_text(json.dumps(CONFIG, indent=2) + "\n")
    (out / "vocab.txt").write_text("\n".join(VOCAB) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
