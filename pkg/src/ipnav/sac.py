"""Soft actor-critic with twin critics, target networks, a squashed-Gaussian
policy, and gradient flow into the shared scan-preprocessing parameter.

Per training step the critic update runs first, then the policy update; each
applies its own optimizer (with its own Adam slots) to the preprocessing
parameter, so that parameter receives two updates per step. Target networks
change only through polyak averaging and hold their own averaged copy of the
preprocessing parameter. The critic target is computed with graph recording
disabled, so no gradient ever flows through it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as A
from .autodiff import Tensor, no_grad
from .lidar_prep import IpFamily
from .nn import Adam, IpLayer, NetworkSpec, ObsLayout, PolicyNetwork, QNetwork, clip_grad_norm, zero_grads

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


@dataclass(frozen=True)
class ActionSpace:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        if np.any(self.low >= self.high):
            raise ValueError("require low < high per action dimension")

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    @property
    def scale(self) -> np.ndarray:
        return (self.high - self.low) / 2.0

    @property
    def center(self) -> np.ndarray:
        return (self.high + self.low) / 2.0

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high)


class ReplayBuffer:
    """Fixed-capacity FIFO ring; sampling is uniform with replacement."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, rng: np.random.Generator, dtype=np.float32):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.act = np.zeros((capacity, act_dim), dtype=dtype)
        self.rew = np.zeros(capacity, dtype=dtype)
        self.obs2 = np.zeros((capacity, obs_dim), dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self._next = 0
        self._size = 0
        self._rng = rng

    def __len__(self) -> int:
        return self._size

    def push(self, obs, act, rew, obs2, done) -> None:
        if not math.isfinite(rew):
            raise ValueError("non-finite reward")
        i = self._next
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.obs2[i] = obs2
        self.done[i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise ValueError("sample from empty buffer")
        idx = self._rng.integers(0, self._size, size=n)
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "rew": self.rew[idx],
            "obs2": self.obs2[idx],
            "done": self.done[idx],
        }


class AgentBundle:
    """Policy, twin critics, their polyak targets, and the preprocessing
    parameter(s), checkpointable as a unit.

    ``policy_group`` / ``critic_group`` are the exact parameter partitions
    the two optimizers step; in shared mode both contain the same
    preprocessing tensor (under the same name), in separate mode each graph
    owns a copy.
    """

    def __init__(
        self,
        policy: PolicyNetwork,
        q1: QNetwork,
        q2: QNetwork,
        q1_target: QNetwork,
        q2_target: QNetwork,
        action_space: ActionSpace,
        layout: ObsLayout,
        spec: NetworkSpec,
        policy_group: dict[str, Tensor],
        critic_group: dict[str, Tensor],
        alpha: float,
        gamma: float,
        tau: float,
        grad_clip: float,
        lr: float,
        noise_rng: np.random.Generator,
        dtype=np.float32,
    ):
        self.policy = policy
        self.q1 = q1
        self.q2 = q2
        self.q1_target = q1_target
        self.q2_target = q2_target
        self.action_space = action_space
        self.layout = layout
        self.spec = spec
        self.alpha = alpha
        self.gamma = gamma
        self.tau = tau
        self.grad_clip = grad_clip
        self.lr = lr
        self._policy_group = policy_group
        self._critic_group = critic_group
        self.policy_opt = Adam(policy_group, lr)
        self.critic_opt = Adam(critic_group, lr)
        self.noise_rng = noise_rng
        self.dtype = dtype
        polyak_update(self, tau=1.0)  # targets start as exact copies

    @property
    def ip(self) -> IpLayer | None:
        """The policy-side preprocessing layer (the single shared instance by
        default); None when observations carry no scan block."""
        return self.policy.trunk.ip

    def policy_params(self) -> dict[str, Tensor]:
        return dict(self._policy_group)

    def critic_params(self) -> dict[str, Tensor]:
        return dict(self._critic_group)

    def all_live_params(self) -> dict[str, Tensor]:
        out = dict(self._policy_group)
        out.update(self._critic_group)
        return out

    def target_params(self) -> dict[str, Tensor]:
        out = self.q1_target.params("q1_target")
        out.update(self.q2_target.params("q2_target"))
        for name, net in (("q1_target", self.q1_target), ("q2_target", self.q2_target)):
            t_ip = net.trunk.ip
            if t_ip is not None and t_ip.zeta is not None:
                out.update(t_ip.params(f"{name}.ip"))
        return out

    def zero_all_grads(self) -> None:
        zero_grads(self.all_live_params())

    # -- acting ----------------------------------------------------------------

    def sample_action(self, obs: Tensor, noise: np.ndarray | None, train: bool) -> tuple[Tensor, Tensor]:
        """Reparameterized squashed-Gaussian sample with its log density.

        ``noise`` is standard-normal of shape (batch, act_dim); None selects
        the deterministic (mean) action. The log density includes the tanh
        change-of-variables term and the affine bound-scaling term.
        """
        mean, log_std = self.policy(obs, train=train)
        scale = self.action_space.scale.astype(self.dtype)
        center = self.action_space.center.astype(self.dtype)
        if noise is None:
            u = mean
            eps2 = np.zeros_like(mean.data)
        else:
            std = A.exp(log_std)
            u = mean + A.mul(std, Tensor(noise.astype(self.dtype)))
            eps2 = noise.astype(self.dtype) ** 2
        action = Tensor(center) + A.mul(Tensor(scale), A.tanh(u))
        # log N(u; mean, std) of the reparameterized u, written in the noise:
        gauss = Tensor(-0.5 * eps2 - 0.5 * LOG_2PI) - log_std
        # log(1 - tanh(u)^2) in the overflow-safe form 2 (log 2 - u - softplus(-2u))
        tanh_corr = (LOG_2 - u - A.softplus(u * -2.0)) * 2.0
        logp = A.sum_(gauss - tanh_corr - Tensor(np.log(scale)), axis=1, keepdims=True)
        return action, logp

    def act(self, obs_vec: np.ndarray, deterministic: bool = False) -> np.ndarray:
        """Single-observation action, outside the graph."""
        with no_grad():
            obs = Tensor(obs_vec[None, :].astype(self.dtype))
            noise = None if deterministic else self.noise_rng.standard_normal((1, self.action_space.dim))
            action, _ = self.sample_action(obs, noise, train=False)
        return action.data[0].astype(np.float64)


def make_agent(
    layout: ObsLayout,
    action_space: ActionSpace,
    spec: NetworkSpec,
    *,
    ip_family: IpFamily | str = IpFamily.RAW,
    y_min: np.ndarray | None = None,
    y_max: np.ndarray | None = None,
    ip_shared: bool = True,
    separate_ip_params: bool = False,
    alpha: float = 0.01,
    gamma: float = 0.99,
    tau: float = 0.005,
    lr: float = 1e-4,
    grad_clip: float = 10.0,
    init_rng: np.random.Generator | None = None,
    noise_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
    dtype=np.float32,
) -> AgentBundle:
    """Construct a full SAC agent.

    With ``layout.scan_len == 0`` (plain vector observations, e.g. the toy
    task) no preprocessing layer is attached. By default the policy and both
    critics reference one shared preprocessing parameter; with
    ``separate_ip_params`` each of the three graphs trains its own copy.
    """
    init_rng = init_rng if init_rng is not None else np.random.default_rng(0)
    noise_rng = noise_rng if noise_rng is not None else np.random.default_rng(1)
    fam = IpFamily(ip_family)

    def build_ip(trainable: bool = True) -> IpLayer | None:
        if layout.scan_len == 0:
            return None
        return IpLayer(fam, y_min, y_max, layout, shared=ip_shared, trainable=trainable, dtype=dtype)

    ip_shared_live = build_ip()
    if separate_ip_params and ip_shared_live is not None:
        ip_policy, ip_q1, ip_q2 = build_ip(), build_ip(), build_ip()
    else:
        ip_policy = ip_q1 = ip_q2 = ip_shared_live

    adim = action_space.dim
    policy = PolicyNetwork(spec, layout, adim, ip_policy, init_rng, dropout_rng, dtype)
    q1 = QNetwork(spec, layout, adim, ip_q1, init_rng, dtype)
    q2 = QNetwork(spec, layout, adim, ip_q2, init_rng, dtype)
    q1_t = QNetwork(spec, layout, adim, build_ip(trainable=False), init_rng, dtype)
    q2_t = QNetwork(spec, layout, adim, build_ip(trainable=False), init_rng, dtype)

    policy_group = policy.params("policy")
    critic_group = q1.params("q1")
    critic_group.update(q2.params("q2"))
    if ip_policy is not None and ip_policy.zeta is not None:
        if separate_ip_params:
            policy_group.update(ip_policy.params("ip_policy"))
            critic_group.update(ip_q1.params("ip_q1"))
            critic_group.update(ip_q2.params("ip_q2"))
        else:
            policy_group.update(ip_policy.params("ip"))
            critic_group.update(ip_policy.params("ip"))

    return AgentBundle(
        policy,
        q1,
        q2,
        q1_t,
        q2_t,
        action_space,
        layout,
        spec,
        policy_group,
        critic_group,
        alpha,
        gamma,
        tau,
        grad_clip,
        lr,
        noise_rng,
        dtype,
    )


def critic_target(bundle: AgentBundle, batch: dict[str, np.ndarray], rng: np.random.Generator) -> np.ndarray:
    """r + gamma (1 - d) (min_j Q_target_j(x', a') - alpha log pi(a'|x')),
    with a' freshly sampled from the current policy. No gradients flow."""
    with no_grad():
        obs2 = Tensor(batch["obs2"])
        noise = rng.standard_normal((batch["obs2"].shape[0], bundle.action_space.dim))
        a2, logp2 = bundle.sample_action(obs2, noise, train=False)
        q1t = bundle.q1_target(obs2, a2).data[:, 0]
        q2t = bundle.q2_target(obs2, a2).data[:, 0]
        backup = np.minimum(q1t, q2t) - bundle.alpha * logp2.data[:, 0]
        return batch["rew"] + bundle.gamma * (1.0 - batch["done"]) * backup


def critic_update(bundle: AgentBundle, batch: dict[str, np.ndarray], rng: np.random.Generator) -> float:
    """One MSE step of both critics toward the shared target; the gradient
    also reaches the preprocessing parameter through the critics' input
    stage. Policy weights are untouched."""
    target = critic_target(bundle, batch, rng)
    obs = Tensor(batch["obs"])
    act = Tensor(batch["act"])
    tgt = Tensor(target.astype(bundle.dtype)[:, None])
    bundle.zero_all_grads()
    q1 = bundle.q1(obs, act, train=True)
    q2 = bundle.q2(obs, act, train=True)
    loss = A.mean((q1 - tgt) ** 2.0) + A.mean((q2 - tgt) ** 2.0)
    loss.backward()
    clip_grad_norm(bundle.critic_opt.params, bundle.grad_clip)
    bundle.critic_opt.step()
    return float(loss.data)


def policy_update(bundle: AgentBundle, batch: dict[str, np.ndarray], rng: np.random.Generator) -> float:
    """One step on alpha log pi - min_j Q_j with a reparameterized action.

    The loss is differentiated through the critics, but only the policy
    optimizer (policy weights plus the preprocessing parameter) steps;
    critic weights stay bitwise unchanged."""
    obs = Tensor(batch["obs"])
    noise = rng.standard_normal((batch["obs"].shape[0], bundle.action_space.dim))
    bundle.zero_all_grads()
    action, logp = bundle.sample_action(obs, noise, train=True)
    q1 = bundle.q1(obs, action, train=True)
    q2 = bundle.q2(obs, action, train=True)
    loss = A.mean(A.mul(logp, bundle.alpha) - A.minimum(q1, q2))
    loss.backward()
    clip_grad_norm(bundle.policy_opt.params, bundle.grad_clip)
    bundle.policy_opt.step()
    return float(loss.data)


def polyak_update(bundle: AgentBundle, tau: float | None = None) -> None:
    """targets <- tau * live + (1 - tau) * targets, elementwise."""
    tau = bundle.tau if tau is None else tau
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    for live_net, target_net in ((bundle.q1, bundle.q1_target), (bundle.q2, bundle.q2_target)):
        live = live_net.params("q")
        tgt = target_net.params("q")
        for k in live:
            tgt[k].data *= 1.0 - tau
            tgt[k].data += tau * live[k].data
        live_ip, t_ip = live_net.trunk.ip, target_net.trunk.ip
        if live_ip is not None and live_ip.zeta is not None and t_ip is not None:
            t_ip.zeta.data *= 1.0 - tau
            t_ip.zeta.data += tau * live_ip.zeta.data


def sac_update(bundle: AgentBundle, buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> tuple[float, float]:
    """One full update block: sample a mini-batch, critic step, policy step,
    polyak target refresh."""
    batch = buffer.sample(batch_size)
    closs = critic_update(bundle, batch, rng)
    ploss = policy_update(bundle, batch, rng)
    polyak_update(bundle)
    return closs, ploss
