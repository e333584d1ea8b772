"""Model checkpoint file: config echo plus named float64 arrays.

Layout (all integers little-endian uint64):
  16-byte magic | config_len | config bytes (key=value lines, UTF-8)
  | n_arrays | for each: name_len | name | rows | cols | rows*cols float64
"""

from __future__ import annotations

import struct

import numpy as np

from .engine import Tensor
from .injection import InjectionParam
from .models import Model

MAGIC = b"LINKFORGE-CKPT\x00\x00"


class CheckpointError(Exception):
    pass


def _weight_names(model):
    names = []
    for li, group in enumerate(model.weights):
        if model.kind == "sage_mean":
            names.append((f"layer{li}.w_self", group[0]))
            names.append((f"layer{li}.w_neigh", group[1]))
        else:
            names.append((f"layer{li}.w", group[0]))
    return names


def save(path, model, injection=None, extra_config=None):
    config = {
        "model": model.kind,
        "dims": ",".join(str(d) for d in model.dims),
        "seed": str(model.seed),
    }
    if injection is not None:
        config["injection"] = "1"
        config["injection_symmetric"] = "1" if injection.symmetric else "0"
        config["injection_init_mode"] = injection.init_mode
        config["injection_seed"] = str(injection.seed)
    else:
        config["injection"] = "0"
    if extra_config:
        config.update({k: str(v) for k, v in extra_config.items()})

    arrays = _weight_names(model)
    if injection is not None:
        arrays.append(("injection.j", injection.j))

    conf_bytes = "".join(f"{k}={v}\n" for k, v in sorted(config.items())).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(conf_bytes)))
        f.write(conf_bytes)
        f.write(struct.pack("<Q", len(arrays)))
        for name, tensor in arrays:
            nb = name.encode()
            f.write(struct.pack("<Q", len(nb)))
            f.write(nb)
            f.write(struct.pack("<QQ", tensor.rows, tensor.cols))
            f.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load(path):
    """Returns (config dict, Model, InjectionParam or None)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:16] != MAGIC:
        raise CheckpointError(f"{path}: bad magic header")
    off = 16

    def read_u64():
        nonlocal off
        (v,) = struct.unpack_from("<Q", blob, off)
        off += 8
        return v

    conf_len = read_u64()
    config = {}
    for line in blob[off:off + conf_len].decode().splitlines():
        k, _, v = line.partition("=")
        config[k] = v
    off += conf_len

    arrays = {}
    for _ in range(read_u64()):
        name_len = read_u64()
        name = blob[off:off + name_len].decode()
        off += name_len
        rows, cols = read_u64(), read_u64()
        n = rows * cols
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).reshape(rows, cols)
        off += 8 * n
        arrays[name] = np.array(arr)

    dims = [int(d) for d in config["dims"].split(",")]
    model = Model(config["model"], dims, seed=int(config.get("seed", "0")))
    for name, tensor in _weight_names(model):
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name}")
        if arrays[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"{path}: array {name} shape {arrays[name].shape} "
                f"!= expected {tensor.data.shape}"
            )
        tensor.data = arrays[name]

    injection = None
    if config.get("injection") == "1":
        j = arrays.get("injection.j")
        if j is None:
            raise CheckpointError(f"{path}: injection flagged but no injection.j")
        injection = InjectionParam(
            j.shape[0],
            init_mode=config.get("injection_init_mode", "constant"),
            seed=int(config.get("injection_seed", "0")),
            symmetric=config.get("injection_symmetric", "1") == "1",
        )
        injection.j = Tensor(j, requires_grad=True)
    return config, model, injection
