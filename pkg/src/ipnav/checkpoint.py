"""Self-describing agent checkpoints.

A checkpoint is a single ``.npz`` holding a versioned JSON header (network
spec, observation layout, action bounds, preprocessing setup, SAC
hyperparameters, training step, root seed, plus any caller metadata such as
the resolved experiment config) and every array needed to resume: live
parameters, target parameters, both optimizers' moments, and the scan
bounds. Loading rebuilds the bundle and overwrites its arrays, so a
train -> checkpoint -> eval round trip reproduces in-training evaluations
exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import NetworkSpec, ConvBlock, ObsLayout
from .sac import ActionSpace, AgentBundle, make_agent

FORMAT_VERSION = 1


def save_agent(
    path: str | Path,
    bundle: AgentBundle,
    *,
    step: int = 0,
    root_seed: int = 0,
    separate_ip_params: bool = False,
    extra_meta: dict | None = None,
) -> None:
    spec = bundle.spec
    ip = bundle.ip
    meta = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "root_seed": root_seed,
        "dtype": np.dtype(bundle.dtype).name,
        "alpha": bundle.alpha,
        "gamma": bundle.gamma,
        "tau": bundle.tau,
        "lr": bundle.lr,
        "grad_clip": bundle.grad_clip,
        "layout": {
            "scan_len": bundle.layout.scan_len,
            "scan_stack": bundle.layout.scan_stack,
            "extra_dims": bundle.layout.extra_dims,
        },
        "spec": {
            "model_id": spec.model_id,
            "hidden": list(spec.hidden),
            "activation": spec.activation,
            "lrelu_slope": spec.lrelu_slope,
            "dropout_rate": spec.dropout_rate,
            "conv_blocks": [[b.channels, b.kernel, b.stride] for b in spec.conv_blocks],
            "scan_stack": spec.scan_stack,
        },
        "ip": None
        if ip is None
        else {"family": ip.family.value, "shared": ip.shared, "separate": separate_ip_params},
        "opt_policy_t": bundle.policy_opt.t,
        "opt_critic_t": bundle.critic_opt.t,
        "extra": extra_meta or {},
    }
    arrays: dict[str, np.ndarray] = {}
    for k, p in bundle.all_live_params().items():
        arrays[f"param::{k}"] = p.data
    for k, p in bundle.target_params().items():
        arrays[f"target::{k}"] = p.data
    for k, a in bundle.policy_opt.state_arrays().items():
        arrays[f"optp::{k}"] = a
    for k, a in bundle.critic_opt.state_arrays().items():
        arrays[f"optc::{k}"] = a
    arrays["action_low"] = bundle.action_space.low
    arrays["action_high"] = bundle.action_space.high
    if ip is not None:
        arrays["y_min"] = ip.y_min_arr
        arrays["y_max"] = ip.y_max_arr
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_agent(path: str | Path, noise_rng: np.random.Generator | None = None) -> tuple[AgentBundle, dict]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        arrays = {k: z[k] for k in z.files if k != "meta"}

    lay = meta["layout"]
    layout = ObsLayout(lay["scan_len"], lay["scan_stack"], lay["extra_dims"])
    sp = meta["spec"]
    spec = NetworkSpec(
        sp["model_id"],
        tuple(sp["hidden"]),
        sp["activation"],
        sp["lrelu_slope"],
        sp["dropout_rate"],
        tuple(ConvBlock(*b) for b in sp["conv_blocks"]),
        sp["scan_stack"],
    )
    space = ActionSpace(arrays["action_low"], arrays["action_high"])
    dtype = np.dtype(meta["dtype"]).type
    ip_meta = meta["ip"]
    bundle = make_agent(
        layout,
        space,
        spec,
        ip_family=(ip_meta or {}).get("family", "raw"),
        y_min=arrays.get("y_min"),
        y_max=arrays.get("y_max"),
        ip_shared=(ip_meta or {}).get("shared", True),
        separate_ip_params=(ip_meta or {}).get("separate", False),
        alpha=meta["alpha"],
        gamma=meta["gamma"],
        tau=meta["tau"],
        lr=meta["lr"],
        grad_clip=meta["grad_clip"],
        noise_rng=noise_rng,
        dtype=dtype,
    )
    live = bundle.all_live_params()
    for k, p in live.items():
        p.data[...] = arrays[f"param::{k}"]
    for k, p in bundle.target_params().items():
        p.data[...] = arrays[f"target::{k}"]
    bundle.policy_opt.load_state_arrays(
        {k[len("optp::") :]: v for k, v in arrays.items() if k.startswith("optp::")}, meta["opt_policy_t"]
    )
    bundle.critic_opt.load_state_arrays(
        {k[len("optc::") :]: v for k, v in arrays.items() if k.startswith("optc::")}, meta["opt_critic_t"]
    )
    return bundle, meta
