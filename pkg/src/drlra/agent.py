"""Deep Q-learning agent that predicts which nodes are active.

Networks are plain numpy MLPs (ReLU hidden layers, linear output) with
hand-written backpropagation. Parameters may carry a leading "member" axis,
which lets the whole ensemble run as one batched computation; a single
network is the same code with no leading axis.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import NodeId

EPS_FLOOR = 0.01
EPS_DECAY = 0.995

CHECKPOINT_MAGIC = b"DRLRA-QNET"
CHECKPOINT_VERSION = 1


def relu(x):
    return np.maximum(x, 0.0)


@dataclass
class QNetwork:
    """Dense network ``input -> 3 hidden (ReLU) -> 2**group_size outputs``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    group_size: int
    t_h: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must have the same number of layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[:-2] != b.shape[:-1] or w.shape[-1] != b.shape[-1]:
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[-2] != self.weights[i - 1].shape[-1]:
                raise ValueError(f"layer {i}: fan-in {w.shape[-2]} != previous fan-out")
        if self.weights[0].shape[-2] != self.group_size * self.t_h:
            raise ValueError("input width must equal group_size * t_h")
        if self.weights[-1].shape[-1] != 2**self.group_size:
            raise ValueError("output width must equal 2**group_size")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[-2]] + [w.shape[-1] for w in self.weights]

    @property
    def members(self) -> int | None:
        """Ensemble size for stacked parameters, ``None`` for a single network."""
        lead = self.weights[0].shape[:-2]
        return lead[0] if lead else None

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        self.group_size, self.t_h)

    def member(self, i: int) -> "QNetwork":
        """View of ensemble member ``i`` as a single network (shares memory)."""
        return QNetwork([w[i] for w in self.weights], [b[i] for b in self.biases],
                        self.group_size, self.t_h)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def init_qnetwork(group_size: int, t_h: int, rng: np.random.Generator, hidden: int = 64,
                  n_hidden: int = 3, members: int | None = None, dtype=np.float64) -> QNetwork:
    """Weights uniform in ``±1/sqrt(fan_in)``, zero biases."""
    sizes = [group_size * t_h] + [hidden] * n_hidden + [2**group_size]
    lead = () if members is None else (members,)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=lead + (fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(lead + (fan_out,), dtype=dtype))
    return QNetwork(weights, biases, group_size, t_h)


def _forward_all(net: QNetwork, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b[..., None, :]
        acts.append(z if i == last else relu(z))
    return acts


def forward(net: QNetwork, state: np.ndarray) -> np.ndarray:
    """Q-value of every candidate subset for ``state``.

    ``state`` may be one window (``group_size x t_h`` or flattened), or a
    batch ``(..., B, group_size * t_h)`` matching the parameter stacking.
    """
    x = np.asarray(state, dtype=net.weights[0].dtype)
    width = net.group_size * net.t_h
    single = x.ndim <= 2 and x.size == width
    if single:
        x = x.reshape(1, width)
    if x.shape[-1] != width:
        raise ValueError(f"state width {x.shape[-1]} does not match network input {width}")
    out = _forward_all(net, x)[-1]
    return out[0] if single else out


def loss_and_grads(net: QNetwork, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared TD error on the taken actions and its parameter gradient.

    Shapes: ``states (..., B, in)``, ``actions (..., B)``, ``targets (..., B)``.
    Targets are constants. Returns ``(loss[...], grads)`` with ``grads`` in
    :meth:`QNetwork.params` order.
    """
    acts = _forward_all(net, states)
    q = acts[-1]
    q_sel = np.take_along_axis(q, actions[..., None], axis=-1)[..., 0]
    err = q_sel - targets
    B = err.shape[-1]
    loss = (err**2).mean(axis=-1)

    delta = np.zeros_like(q)
    np.put_along_axis(delta, actions[..., None], (2.0 / B) * err[..., None], axis=-1)
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for i in range(len(net.weights) - 1, -1, -1):
        a_in = acts[i]
        gw[i] = np.swapaxes(a_in, -1, -2) @ delta
        gb[i] = delta.sum(axis=-2)
        if i:
            delta = (delta @ np.swapaxes(net.weights[i], -1, -2)) * (acts[i] > 0)
    return loss, [g for wb in zip(gw, gb) for g in wb]


def apply_sgd(net: QNetwork, grads: Sequence[np.ndarray], alpha: float) -> None:
    for p, g in zip(net.params(), grads):
        p -= alpha * g


class Adam:
    """Adam moments for one network's parameters (optional optimiser)."""

    def __init__(self, net: QNetwork, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(p) for p in net.params()]
        self.v = [np.zeros_like(p) for p in net.params()]
        self.b1, self.b2, self.eps, self.t = beta1, beta2, eps, 0

    def step(self, net: QNetwork, grads, alpha: float) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(net.params(), grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= alpha * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


def _valid_mask(net: QNetwork, n_valid) -> np.ndarray | None:
    if n_valid is None:
        return None
    return np.arange(2**net.group_size) < np.asarray(n_valid)[..., None]


def _masked_max(q: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return q.max(axis=-1)
    return np.where(mask[..., None, :], q, -np.inf).max(axis=-1)


def train_step(net: QNetwork, batch: Sequence[Experience], gamma: float, alpha: float,
               target_net: QNetwork | None = None) -> float:
    """One gradient step on a single network; returns the pre-update loss.

    Targets are ``r + gamma * max_a Q(s', a)`` evaluated with ``target_net``
    (the network itself when omitted).
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    if not 0.0 <= gamma <= 1.0 or alpha <= 0:
        raise ValueError("need 0 <= gamma <= 1 and alpha > 0")
    w = net.group_size * net.t_h
    s = np.stack([np.asarray(e.state, float).reshape(w) for e in batch])
    s2 = np.stack([np.asarray(e.next_state, float).reshape(w) for e in batch])
    a = np.array([e.action for e in batch])
    r = np.array([e.reward for e in batch], dtype=float)
    y = r + gamma * forward(target_net or net, s2).max(axis=-1)
    loss, grads = loss_and_grads(net, s, a, y)
    if not (np.isfinite(loss) and all(np.isfinite(g).all() for g in grads)):
        raise FloatingPointError(f"non-finite loss or gradient (loss={loss!r})")
    apply_sgd(net, grads, alpha)
    return float(loss)


def q_target_tabular(q: float, r: float, gamma: float, alpha: float, max_next_q: float) -> float:
    """Tabular update ``q + alpha (r + gamma max_next_q - q)``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    return q + alpha * (r + gamma * max_next_q - q)


@dataclass(frozen=True)
class EpsilonSchedule:
    eps: float = 1.0
    floor: float = EPS_FLOOR
    decay: float = EPS_DECAY

    def __post_init__(self):
        if not self.floor <= self.eps <= 1.0:
            raise ValueError(f"epsilon {self.eps} outside [{self.floor}, 1]")


def epsilon_next(eps: EpsilonSchedule) -> EpsilonSchedule:
    return EpsilonSchedule(max(eps.floor, eps.eps * eps.decay), eps.floor, eps.decay)


def select_action(q: np.ndarray, eps: float, rng: np.random.Generator, n_valid: int | None = None) -> int:
    """Epsilon-greedy choice over subset indices; ties go to the lowest index."""
    q = np.asarray(q)
    n = q.shape[-1] if n_valid is None else n_valid
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(n))
    return int(np.argmax(q[:n]))


def subset_to_index(nodes: Sequence[NodeId], predicted) -> int:
    """Bitmask index of ``predicted`` over the ordered group ``nodes``."""
    return sum(1 << i for i, k in enumerate(nodes) if k in predicted)


def index_to_subset(nodes: Sequence[NodeId], index: int) -> frozenset[NodeId]:
    return frozenset(k for i, k in enumerate(nodes) if index >> i & 1)


def reward(predicted, actual, group) -> float:
    """``|group|`` if the group's predicted set is exactly right, else 0."""
    group = frozenset(group)
    return float(len(group)) if (frozenset(predicted) & group) == (frozenset(actual) & group) else 0.0


def partition(k_nodes: int, group_size: int) -> list[tuple[NodeId, ...]]:
    """Contiguous groups of ``group_size`` nodes; the last may be smaller."""
    if not 1 <= group_size <= 10:
        raise ValueError("group_size must be in 1..10")
    return [tuple(range(s, min(s + group_size, k_nodes))) for s in range(0, k_nodes, group_size)]


@dataclass
class AgentConfig:
    group_size: int = 4
    t_h: int = 4
    hidden: int = 64
    n_hidden: int = 3
    gamma: float = 0.05
    alpha: float = 0.001
    optimizer: str = "adam"
    replay: bool = True
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_update: int = 100
    eps_start: float = 1.0
    eps_floor: float = EPS_FLOOR
    eps_decay: float = EPS_DECAY
    dtype: str = "float32"

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class EnsembleAgent:
    """One Q-network per node group, run as a single stacked computation.

    Groups smaller than ``group_size`` are zero-padded on the input side and
    their surplus outputs are masked out, which makes each member equivalent
    to a network sized for its own group.
    """

    def __init__(self, k_nodes: int, cfg: AgentConfig | None = None, rng: np.random.Generator | None = None):
        self.cfg = cfg = cfg or AgentConfig()
        self.k_nodes = k_nodes
        self.groups = partition(k_nodes, cfg.group_size)
        self.sizes = np.array([len(g) for g in self.groups])
        self.n_valid = 2**self.sizes
        E, G = len(self.groups), cfg.group_size
        rng = rng if rng is not None else np.random.default_rng()
        dt = np.dtype(cfg.dtype)
        self.net = init_qnetwork(G, cfg.t_h, rng, cfg.hidden, cfg.n_hidden, members=E, dtype=dt)
        self.target = self.net.copy()
        self.eps = EpsilonSchedule(cfg.eps_start, cfg.eps_floor, cfg.eps_decay)
        self.steps = 0
        self.learning = True
        self._adam = Adam(self.net) if cfg.optimizer == "adam" else None
        # node -> (member, row) of the padded per-group window
        self._rows = np.full((E, G), -1)
        for e, g in enumerate(self.groups):
            self._rows[e, : len(g)] = g
        self._bits = 1 << np.arange(G)
        cap = cfg.replay_capacity if cfg.replay else 1
        w = G * cfg.t_h
        self._s = np.zeros((cap, E, w), dtype=dt)
        self._a = np.zeros((cap, E), dtype=np.int64)
        self._r = np.zeros((cap, E), dtype=dt)
        self._s2 = np.zeros((cap, E, w), dtype=dt)
        self._n = 0
        self._head = 0

    @property
    def n_members(self) -> int:
        return len(self.groups)

    def member_network(self, e: int) -> QNetwork:
        return self.net.member(e)

    def encode(self, history: np.ndarray) -> np.ndarray:
        """Cell-wide ``(K, t_h)`` observed history -> per-member flat inputs."""
        padded = np.zeros((history.shape[0] + 1, history.shape[1]), dtype=self._s.dtype)
        padded[:-1] = history
        return padded[self._rows].reshape(self.n_members, -1)

    def q_values(self, x: np.ndarray) -> np.ndarray:
        return forward(self.net, x[:, None, :])[:, 0, :]

    def act(self, x: np.ndarray, rng: np.random.Generator, eps: float | None = None) -> np.ndarray:
        """Epsilon-greedy action index per member."""
        eps = self.eps.eps if eps is None else eps
        q = self.q_values(x)
        q = np.where(np.arange(q.shape[-1]) < self.n_valid[:, None], q, -np.inf)
        actions = q.argmax(axis=-1)
        if eps > 0:
            explore = rng.random(self.n_members) < eps
            if explore.any():
                rand = (rng.random(self.n_members) * self.n_valid).astype(np.int64)
                actions = np.where(explore, rand, actions)
        return actions

    def predict(self, history: np.ndarray, rng: np.random.Generator, eps: float | None = None):
        """``(encoded state, action per member, predicted-active node mask)``."""
        x = self.encode(history)
        actions = self.act(x, rng, eps)
        return x, actions, self.actions_to_mask(actions)

    def actions_to_mask(self, actions: np.ndarray) -> np.ndarray:
        """Boolean length-K vector of nodes predicted active."""
        bits = (actions[:, None] & self._bits) > 0
        pred = np.zeros(self.k_nodes + 1, dtype=bool)
        pred[self._rows.ravel()] = bits.ravel()
        return pred[: self.k_nodes]

    def group_rewards(self, predicted: np.ndarray, observed: np.ndarray) -> np.ndarray:
        """Per-member all-or-nothing reward from boolean node vectors."""
        wrong = np.zeros(self.k_nodes + 1, dtype=bool)
        wrong[: self.k_nodes] = predicted != observed
        any_wrong = wrong[self._rows].any(axis=1)
        return np.where(any_wrong, 0.0, self.sizes.astype(float))

    def remember(self, x, actions, rewards, x_next) -> None:
        i = self._head
        self._s[i], self._a[i], self._r[i], self._s2[i] = x, actions, rewards, x_next
        cap = self._s.shape[0]
        self._head = (i + 1) % cap
        self._n = min(self._n + 1, cap)

    def learn(self, rng: np.random.Generator) -> float | None:
        """One training update; returns the mean pre-update loss, or ``None``."""
        cfg = self.cfg
        if cfg.replay:
            if self._n < cfg.batch_size:
                return None
            idx = rng.integers(0, self._n, size=cfg.batch_size)
            target = self.target
        else:
            if self._n == 0:
                return None
            idx = np.array([(self._head - 1) % self._s.shape[0]])
            target = self.net
        s = np.swapaxes(self._s[idx], 0, 1)
        s2 = np.swapaxes(self._s2[idx], 0, 1)
        a = self._a[idx].T
        r = self._r[idx].T
        mask = _valid_mask(self.net, self.n_valid)
        y = r + cfg.gamma * _masked_max(forward(target, s2), mask)
        loss, grads = loss_and_grads(self.net, s, a, y)
        if not np.isfinite(loss).all() or not all(np.isfinite(g).all() for g in grads):
            raise FloatingPointError(f"non-finite training loss at step {self.steps}: {loss}")
        if self._adam is not None:
            self._adam.step(self.net, grads, cfg.alpha)
        else:
            apply_sgd(self.net, grads, cfg.alpha)
        self.steps += 1
        if cfg.replay and self.steps % cfg.target_update == 0:
            self.target = self.net.copy()
        return float(loss.mean())

    def clear_replay(self) -> None:
        """Forget stored experience, keeping the weights and epsilon."""
        self._n = 0
        self._head = 0

    def decay_epsilon(self) -> None:
        self.eps = epsilon_next(self.eps)

    def freeze(self) -> None:
        self.learning = False

    # checkpoint -------------------------------------------------------------

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    def to_bytes(self) -> bytes:
        header = {
            "version": CHECKPOINT_VERSION,
            "byteorder": "little",
            "dtype": "float64",
            "k_nodes": self.k_nodes,
            "group_size": self.cfg.group_size,
            "t_h": self.cfg.t_h,
            "members": self.n_members,
            "layer_sizes": self.net.sizes,
            "agent": vars(self.cfg),
            "epsilon": self.eps.eps,
            "steps": self.steps,
        }
        buf = io.BytesIO()
        buf.write(CHECKPOINT_MAGIC + b"\n")
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in self.net.params():
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "EnsembleAgent":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "EnsembleAgent":
        magic, header_line, body = data.split(b"\n", 2)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a drlra checkpoint")
        h = json.loads(header_line)
        if h["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {h['version']}")
        agent = cls(h["k_nodes"], AgentConfig(**h["agent"]), np.random.default_rng(0))
        if agent.net.sizes != h["layer_sizes"]:
            raise ValueError("checkpoint layer sizes do not match its agent config")
        flat = np.frombuffer(body, dtype="<f8")
        off = 0
        for p in agent.net.params():
            p[...] = flat[off: off + p.size].reshape(p.shape).astype(p.dtype)
            off += p.size
        if off != flat.size:
            raise ValueError("checkpoint payload has the wrong length")
        agent.target = agent.net.copy()
        agent.eps = EpsilonSchedule(h["epsilon"], agent.cfg.eps_floor, agent.cfg.eps_decay)
        agent.steps = h["steps"]
        return agent
