"""Binary checkpoints: an ordered sequence of float64 arrays.

Layout: magic b"PODPOCK1", format version (u32 LE), then for each array its
rank (u32 LE), dims (u32 LE each), and values (float64 LE, row-major), until
end of file. Array order for a training state: actor parameter arrays with
(W, b) interleaved (the Gaussian baseline appends its log_std), critic
parameter arrays, then the actor and critic Adam states, each serialized as
[step], m arrays, v arrays in parameter order. Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PODPOCK1"
VERSION = 1


class CheckpointError(IOError):
    """Raised on malformed, truncated, or incompatible checkpoint files."""


def save_arrays(arrays: list[np.ndarray], path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for a in arrays:
            a = np.ascontiguousarray(a, dtype="<f8")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint: expected {n} bytes for {what}, "
                              f"got {len(data)}")
    return data


def load_arrays(path: str | Path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"bad magic: expected {MAGIC!r}, found {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version: expected {VERSION}, "
                                  f"found {version}")
        arrays = []
        while True:
            head = fh.read(4)
            if not head:
                return arrays
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint: partial array rank")
            (rank,) = struct.unpack("<I", head)
            if rank > 8:
                raise CheckpointError(f"implausible array rank {rank}; file is corrupt")
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "array dims"))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            raw = _read_exact(fh, 8 * count, f"array values {dims}")
            arrays.append(np.frombuffer(raw, dtype="<f8").reshape(dims).copy())


def state_arrays(state) -> list[np.ndarray]:
    """Flatten a TrainState into checkpoint order."""
    actor_params = state.actor_params
    return (actor_params
            + state.critic.net.param_arrays()
            + state.actor_opt.state_arrays()
            + state.critic_opt.state_arrays())


def save_state(state, path: str | Path) -> None:
    save_arrays(state_arrays(state), path)


def load_state(state, path: str | Path) -> None:
    """Load arrays into an initialized TrainState in place, validating shapes."""
    template = state_arrays(state)
    arrays = load_arrays(path)
    if len(arrays) != len(template):
        raise CheckpointError(f"checkpoint holds {len(arrays)} arrays, "
                              f"config implies {len(template)}")
    for i, (got, want) in enumerate(zip(arrays, template)):
        if got.shape != want.shape:
            raise CheckpointError(f"array {i}: shape {got.shape} does not match "
                                  f"configured shape {want.shape}")

    n_actor = len(state.actor_params)
    n_critic = len(state.critic.net.param_arrays())
    cursor = 0

    def take(n):
        nonlocal cursor
        out = arrays[cursor:cursor + n]
        cursor += n
        return out

    actor_arrays = take(n_actor)
    critic_arrays = take(n_critic)
    from .policy import GaussianActor  # avoid import cycle at module load
    if isinstance(state.actor, GaussianActor):
        net = actor_arrays[:-1]
        state.actor.mean_net.weights = net[0::2]
        state.actor.mean_net.biases = net[1::2]
        state.actor.log_std = actor_arrays[-1]
    else:
        state.actor.net.weights = actor_arrays[0::2]
        state.actor.net.biases = actor_arrays[1::2]
    state.critic.net.weights = critic_arrays[0::2]
    state.critic.net.biases = critic_arrays[1::2]

    for opt in (state.actor_opt, state.critic_opt):
        n = len(opt.m)
        (step_arr,) = take(1)
        opt.step = int(step_arr[0])
        opt.m = take(n)
        opt.v = take(n)
