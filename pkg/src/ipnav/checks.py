"""Gradient verification: per-layer finite-difference checks and end-to-end
checks through the policy loss of full agents, all in float64.

Used by the ``ipnav gradcheck`` CLI verb and by the acceptance suite. The
end-to-end check freezes the sampling noise and disables dropout, then
compares every backward gradient (network weights plus the preprocessing
parameter) against central differences.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as A
from .autodiff import Tensor, gradcheck
from .lidar_prep import PARAMETRIC_FAMILIES, IpFamily
from .nn import Conv1d, Dense, IpLayer, NetworkSpec, ObsLayout, dropout
from .sac import ActionSpace, make_agent


def _loss_weights(rng: np.random.Generator, shape) -> Tensor:
    # Fixed random mixing weights make the scalar loss sensitive to every output.
    return Tensor(rng.standard_normal(shape))


def gradcheck_layer_kinds(h: float = 1e-6) -> dict[str, float]:
    """Worst relative FD error per layer kind, on small float64 graphs."""
    rng = np.random.default_rng(7)
    out: dict[str, float] = {}

    x = Tensor(rng.standard_normal((3, 5)))
    dense = Dense(5, 4, rng, dtype=np.float64)
    cw = _loss_weights(rng, (3, 4))
    out["dense"] = gradcheck(lambda: A.sum_(A.mul(dense(x), cw)), dense.params("d").values(), h=h)

    for name, act in (("relu", A.relu), ("lrelu", lambda t: A.leaky_relu(t, 0.01)), ("tanh", A.tanh)):
        d2 = Dense(5, 4, rng, dtype=np.float64)
        out[name] = gradcheck(lambda: A.sum_(A.mul(act(d2(x)), cw)), d2.params("d").values(), h=h)

    conv = Conv1d(2, 3, 3, 2, rng, dtype=np.float64)
    xc = Tensor(rng.standard_normal((2, 2, 9)))
    cw3 = _loss_weights(rng, (2, 3, 4))

    def conv_loss():
        y = conv(xc)
        return A.sum_(A.mul(A.reshape(y, (-1, 1)), A.reshape(cw3, (-1, 1))))

    out["conv1d"] = gradcheck(conv_loss, conv.params("c").values(), h=h)

    # Dropout with a frozen mask behaves like an elementwise constant scale.
    d3 = Dense(5, 4, rng, dtype=np.float64)
    mask_rng = np.random.default_rng(11)
    mask = Tensor((mask_rng.random((3, 4)) < 0.8).astype(np.float64) / 0.8)
    out["dropout_fixed_mask"] = gradcheck(
        lambda: A.sum_(A.mul(A.mul(d3(x), mask), cw)), d3.params("d").values(), h=h
    )

    # Preprocessing families: gradient of the raw parameter through the graph.
    m = 6
    layout = ObsLayout(m, 1)
    y_min = np.full(m, 0.2)
    y_max = np.full(m, 30.0)
    obs = Tensor(np.concatenate([rng.uniform(0.3, 25.0, (4, m)), rng.uniform(-1, 1, (4, 4))], axis=1))
    for fam in PARAMETRIC_FAMILIES:
        ip = IpLayer(fam, y_min, y_max, layout, shared=False, dtype=np.float64)
        ip.zeta.data[:] = rng.uniform(-0.5, 0.5, m)
        wmix = _loss_weights(rng, (4, m + 4))
        out[f"ip_{fam.value}"] = gradcheck(
            lambda: A.sum_(A.mul(ip(obs), wmix)), ip.params("ip").values(), h=h
        )
    return out


def gradcheck_model(
    model_id: str,
    ip_family: IpFamily | str = IpFamily.IPAP_REC,
    scan_len: int = 16,
    batch: int = 4,
    samples_per_tensor: int = 25,
    h: float = 1e-6,
) -> float:
    """End-to-end FD check through the policy loss (policy, both critics and
    the shared preprocessing parameter) of a float64 agent. Dropout is
    disabled by evaluating the graph in eval mode; the sampling noise is
    frozen."""
    spec = NetworkSpec.for_model(model_id)
    layout = ObsLayout(scan_len, spec.scan_stack)
    rng = np.random.default_rng(13)
    y_min = np.full(scan_len, 0.2)
    y_max = np.full(scan_len, 30.0)
    space = ActionSpace(np.array([0.0, -1.5]), np.array([0.5, 1.5]))
    bundle = make_agent(
        layout,
        space,
        spec,
        ip_family=ip_family,
        y_min=y_min,
        y_max=y_max,
        init_rng=rng,
        dtype=np.float64,
    )
    obs_np = np.concatenate(
        [rng.uniform(0.3, 25.0, (batch, layout.scan_block)), rng.uniform(-1, 1, (batch, layout.extra_dims))],
        axis=1,
    )
    noise = rng.standard_normal((batch, space.dim))
    obs = Tensor(obs_np)

    def policy_loss():
        action, logp = bundle.sample_action(obs, noise, train=False)
        q1 = bundle.q1(obs, action)
        q2 = bundle.q2(obs, action)
        return A.mean(A.mul(logp, bundle.alpha) - A.minimum(q1, q2))

    params = bundle.all_live_params()
    return gradcheck(
        policy_loss, params.values(), h=h, samples_per_tensor=samples_per_tensor, rng=np.random.default_rng(3)
    )


def run_all(samples_per_tensor: int = 25) -> dict[str, float]:
    """Layer-kind checks plus the four reference models; returns name -> worst error."""
    out = gradcheck_layer_kinds()
    for model_id in ("model_0", "model_1", "model_2", "model_3"):
        out[model_id] = gradcheck_model(model_id, samples_per_tensor=samples_per_tensor)
    return out
