"""Structure-preserving neural surrogates for the reduced closure entropy.

Two small architectures approximate the strictly convex reduced entropy
h_hat as a function of the fruncated normalized moments w:

* an input-convex network (ICNN): hidden-to-hidden weights are kept
  entrywise nonnegative and all activations are softplus (convex and
  non-decreasing), so the output is convex in w by construction;
* a dense residual network as a non-convex baseline with no convexity
  or entropy-dissipation guarantee.

Training minimizes the three-term loss

    |h - h_p|^2 + |beta - beta_p|^2 + |w - psi_gamma(beta_p)|^2

summed over a dataset, where beta_p is the exact input gradient of the
network.  Parameter gradients of the full loss, including the paths
through beta_p and through the moment reconstruction psi_gamma, are
computed analytically: a dual-number (tangent) sweep is run through the
network alongside the ordinary forward pass and the adjoint pass then
differentiates both the value and the directional input derivative.
Everything is plain numpy; no ML framework is involved.

Closure inference assembles the full entropy gradient from the network
value and input gradient,

    g = [h_p(w) - w . beta_p + (log u_0 + 1)/m_0,  beta_p],

which is covariant under rescaling of u by construction: scaling u by c
shifts g exactly by [log c, 0, ..., 0].
"""

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .entropy_core import (
    EXPONENT_LIMIT,
    ClosureConfig,
    ExponentOverflowError,
    solve_reduced_batch,
)
from .moment_basis import basis_matrix
from .quadrature import DEFAULT_ORDER, build_rule
from .sampler import SampleSet

__all__ = [
    "Icnn",
    "Resnet",
    "TrainSettings",
    "TrainedClosure",
    "NewtonOracleClosure",
    "build_network",
    "forward",
    "input_gradient",
    "train",
    "test_errors",
    "infer",
    "infer_batch",
    "save_closure",
    "load_closure",
]


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# architectures
# ---------------------------------------------------------------------------

class Icnn:
    """Input-convex network: softplus layers with nonnegative z-weights.

    Layer k receives the previous hidden state through a nonnegative
    matrix and the raw input through an unconstrained one; the output
    layer is affine with nonnegative hidden weights.  Convexity in the
    input holds for any parameters satisfying the sign constraint.
    """

    arch = "icnn"

    def __init__(self, n_inputs, hidden, Wu, Wz, b, wz_out, wu_out, b_out):
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.Wu = Wu
        self.Wz = Wz
        self.b = b
        self.wz_out = wz_out
        self.wu_out = wu_out
        self.b_out = b_out

    @classmethod
    def initialize(cls, n_inputs, hidden, rng):
        """Gaussian weights scaled by 1/sqrt(fan-in), zero biases, then the
        sign constraint is enforced by clamping."""
        hidden = tuple(int(h) for h in hidden)
        Wu = [rng.standard_normal((h, n_inputs)) / math.sqrt(n_inputs) for h in hidden]
        Wz = [
            rng.standard_normal((hidden[i + 1], hidden[i])) / math.sqrt(hidden[i])
            for i in range(len(hidden) - 1)
        ]
        b = [np.zeros(h) for h in hidden]
        wz_out = rng.standard_normal(hidden[-1]) / math.sqrt(hidden[-1])
        wu_out = rng.standard_normal(n_inputs) / math.sqrt(n_inputs)
        b_out = np.zeros(1)
        net = cls(n_inputs, hidden, Wu, Wz, b, wz_out, wu_out, b_out)
        net.project_convex()
        return net

    def params(self):
        items = []
        for k, w in enumerate(self.Wu):
            items.append((f"Wu{k}", w))
        for k, w in enumerate(self.Wz):
            items.append((f"Wz{k}", w))
        for k, w in enumerate(self.b):
            items.append((f"b{k}", w))
        items.append(("wz_out", self.wz_out))
        items.append(("wu_out", self.wu_out))
        items.append(("b_out", self.b_out))
        return items

    def set_params(self, arrays):
        L = len(self.hidden)
        self.Wu = arrays[:L]
        self.Wz = arrays[L:2 * L - 1]
        self.b = arrays[2 * L - 1:3 * L - 1]
        self.wz_out, self.wu_out, self.b_out = arrays[3 * L - 1:]

    def clone(self):
        return Icnn(
            self.n_inputs,
            self.hidden,
            [w.copy() for w in self.Wu],
            [w.copy() for w in self.Wz],
            [w.copy() for w in self.b],
            self.wz_out.copy(),
            self.wu_out.copy(),
            self.b_out.copy(),
        )

    def project_convex(self):
        """Clamp the hidden-to-hidden weights at zero (in place)."""
        for w in self.Wz:
            np.maximum(w, 0.0, out=w)
        np.maximum(self.wz_out, 0.0, out=self.wz_out)

    def min_convex_weight(self) -> float:
        vals = [w.min() for w in self.Wz] + [self.wz_out.min()]
        return float(min(vals))

    def _forward(self, X):
        A, Z, D = [], [], []
        z = None
        for k in range(len(self.hidden)):
            a = X @ self.Wu[k].T + self.b[k]
            if k > 0:
                a = a + z @ self.Wz[k - 1].T
            z = _softplus(a)
            A.append(a)
            Z.append(z)
            D.append(_sigmoid(a))
        vals = Z[-1] @ self.wz_out + X @ self.wu_out + self.b_out[0]
        return vals, A, Z, D

    def value(self, X):
        return self._forward(np.atleast_2d(X))[0]

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        vals, A, Z, D = self._forward(X)
        L = len(self.hidden)
        S = D[L - 1] * self.wz_out[None, :]
        grad = S @ self.Wu[L - 1]
        for k in range(L - 2, -1, -1):
            S = (S @ self.Wz[k]) * D[k]
            grad += S @ self.Wu[k]
        grad += self.wu_out[None, :]
        return vals, grad

    def loss_param_grads(self, X, a0, C):
        """Gradients of sum_b a0_b * value_b + C_b . input_grad_b wrt params.

        Runs the tangent sweep with direction C through the cached
        forward pass, then one adjoint pass over the combined graph.
        Returns (values, input gradients, list of parameter gradients
        aligned with params()).
        """
        X = np.atleast_2d(X)
        vals, A, Z, D = self._forward(X)
        L = len(self.hidden)

        # input gradient (reverse pass, cached S per layer)
        S = D[L - 1] * self.wz_out[None, :]
        grad = S @ self.Wu[L - 1]
        for k in range(L - 2, -1, -1):
            S = (S @ self.Wz[k]) * D[k]
            grad += S @ self.Wu[k]
        grad += self.wu_out[None, :]

        # tangent sweep in direction C
        Adot, Zdot = [], []
        zdot = None
        for k in range(L):
            adot = C @ self.Wu[k].T
            if k > 0:
                adot = adot + zdot @ self.Wz[k - 1].T
            zdot = D[k] * adot
            Adot.append(adot)
            Zdot.append(zdot)

        d_Wu = [None] * L
        d_Wz = [None] * (L - 1)
        d_b = [None] * L
        d_wz_out = Z[L - 1].T @ a0 + Zdot[L - 1].sum(axis=0)
        d_wu_out = X.T @ a0 + C.sum(axis=0)
        d_b_out = np.array([a0.sum()])

        Zbar = a0[:, None] * self.wz_out[None, :]
        Zdotbar = np.tile(self.wz_out, (X.shape[0], 1))
        for k in range(L - 1, -1, -1):
            spp = D[k] * (1.0 - D[k])
            Adotbar = Zdotbar * D[k]
            Abar = Zbar * D[k] + Zdotbar * Adot[k] * spp
            if k > 0:
                d_Wz[k - 1] = Abar.T @ Z[k - 1] + Adotbar.T @ Zdot[k - 1]
                Zbar = Abar @ self.Wz[k - 1]
                Zdotbar = Adotbar @ self.Wz[k - 1]
            d_Wu[k] = Abar.T @ X + Adotbar.T @ C
            d_b[k] = Abar.sum(axis=0)

        grads = d_Wu + d_Wz + d_b + [d_wz_out, d_wu_out, d_b_out]
        return vals, grad, grads


class Resnet:
    """Dense layers with additive skip connections; non-convex baseline.

    The input is lifted affinely to the (constant) hidden width so the
    skip connections type-check; carries no convexity guarantee and is
    excluded from the entropy-dissipation claims.
    """

    arch = "resnet"

    def __init__(self, n_inputs, hidden, W_in, b_in, W, b, w_out, b_out):
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.W_in = W_in
        self.b_in = b_in
        self.W = W
        self.b = b
        self.w_out = w_out
        self.b_out = b_out

    @classmethod
    def initialize(cls, n_inputs, hidden, rng):
        hidden = tuple(int(h) for h in hidden)
        widths = set(hidden)
        if len(widths) != 1:
            raise ValueError("residual blocks need equal hidden widths")
        d = hidden[0]
        W_in = rng.standard_normal((d, n_inputs)) / math.sqrt(n_inputs)
        b_in = np.zeros(d)
        W = [rng.standard_normal((d, d)) / math.sqrt(d) for _ in hidden]
        b = [np.zeros(d) for _ in hidden]
        w_out = rng.standard_normal(d) / math.sqrt(d)
        b_out = np.zeros(1)
        return cls(n_inputs, hidden, W_in, b_in, W, b, w_out, b_out)

    def params(self):
        items = [("W_in", self.W_in), ("b_in", self.b_in)]
        for k, w in enumerate(self.W):
            items.append((f"W{k}", w))
        for k, w in enumerate(self.b):
            items.append((f"b{k}", w))
        items.append(("w_out", self.w_out))
        items.append(("b_out", self.b_out))
        return items

    def set_params(self, arrays):
        L = len(self.hidden)
        self.W_in, self.b_in = arrays[0], arrays[1]
        self.W = arrays[2:2 + L]
        self.b = arrays[2 + L:2 + 2 * L]
        self.w_out, self.b_out = arrays[2 + 2 * L:]

    def clone(self):
        return Resnet(
            self.n_inputs,
            self.hidden,
            self.W_in.copy(),
            self.b_in.copy(),
            [w.copy() for w in self.W],
            [w.copy() for w in self.b],
            self.w_out.copy(),
            self.b_out.copy(),
        )

    def project_convex(self):
        pass

    def _forward(self, X):
        Z = [X @ self.W_in.T + self.b_in]
        A, D = [], []
        for k in range(len(self.hidden)):
            a = Z[k] @ self.W[k].T + self.b[k]
            A.append(a)
            D.append(_sigmoid(a))
            Z.append(_softplus(a) + Z[k])
        vals = Z[-1] @ self.w_out + self.b_out[0]
        return vals, A, Z, D

    def value(self, X):
        return self._forward(np.atleast_2d(X))[0]

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        vals, A, Z, D = self._forward(X)
        L = len(self.hidden)
        G = np.tile(self.w_out, (X.shape[0], 1))
        for k in range(L - 1, -1, -1):
            G = (G * D[k]) @ self.W[k] + G
        grad = G @ self.W_in
        return vals, grad

    def loss_param_grads(self, X, a0, C):
        X = np.atleast_2d(X)
        vals, A, Z, D = self._forward(X)
        L = len(self.hidden)

        G = np.tile(self.w_out, (X.shape[0], 1))
        for k in range(L - 1, -1, -1):
            G = (G * D[k]) @ self.W[k] + G
        grad = G @ self.W_in

        Zdot = [C @ self.W_in.T]
        Adot = []
        for k in range(L):
            adot = Zdot[k] @ self.W[k].T
            Adot.append(adot)
            Zdot.append(D[k] * adot + Zdot[k])

        d_W = [None] * L
        d_b = [None] * L
        d_w_out = Z[L].T @ a0 + Zdot[L].sum(axis=0)
        d_b_out = np.array([a0.sum()])

        Zbar = a0[:, None] * self.w_out[None, :]
        Zdotbar = np.tile(self.w_out, (X.shape[0], 1))
        for k in range(L - 1, -1, -1):
            spp = D[k] * (1.0 - D[k])
            Adotbar = Zdotbar * D[k]
            Abar = Zbar * D[k] + Zdotbar * Adot[k] * spp
            d_W[k] = Abar.T @ Z[k] + Adotbar.T @ Zdot[k]
            d_b[k] = Abar.sum(axis=0)
            Zbar = Abar @ self.W[k] + Zbar
            Zdotbar = Adotbar @ self.W[k] + Zdotbar
        d_W_in = Zbar.T @ X + Zdotbar.T @ C
        d_b_in = Zbar.sum(axis=0)

        grads = [d_W_in, d_b_in] + d_W + d_b + [d_w_out, d_b_out]
        return vals, grad, grads


def build_network(arch, n_inputs, hidden, rng):
    if arch == "icnn":
        return Icnn.initialize(n_inputs, hidden, rng)
    if arch == "resnet":
        return Resnet.initialize(n_inputs, hidden, rng)
    raise ValueError(f"unknown architecture {arch!r}")


def forward(network, w):
    """Surrogate entropy value(s) at reduced moments w."""
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    vals = network.value(np.atleast_2d(w))
    return float(vals[0]) if single else vals


def input_gradient(network, w):
    """Exact reverse-pass gradient of the surrogate wrt its input."""
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    _, grad = network.value_and_grad(np.atleast_2d(w))
    return grad[0] if single else grad


# ---------------------------------------------------------------------------
# reconstruction terms used by the loss
# ---------------------------------------------------------------------------

def _reconstruction_terms(beta, gamma, ms, wq):
    """psi_gamma(beta) rows and the matching Jacobians (the reduced Hessians)."""
    exponents = beta @ ms
    top = np.max(exponents, axis=1)
    worst = np.max(top)
    if not np.isfinite(worst) or worst > EXPONENT_LIMIT:
        raise ExponentOverflowError(worst)
    density = np.exp(exponents - top[:, None]) * wq
    density /= density.sum(axis=1, keepdims=True)
    mean = density @ ms.T
    psi = mean + gamma * beta
    second = np.einsum("bq,jq,kq->bjk", density, ms, ms)
    jac = second - np.einsum("bj,bk->bjk", mean, mean)
    jac += gamma * np.eye(beta.shape[1])
    return psi, jac


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainSettings:
    """Optimizer and schedule controls for the surrogate trainer."""

    epochs: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-3
    hidden: tuple = (16, 16)
    seed: int = 0
    split: float = 0.9
    quad_order: int = DEFAULT_ORDER
    target_e_u: float | None = None


@dataclass
class TrainedClosure:
    """A trained surrogate plus everything needed to reproduce it."""

    network: object
    gamma: float
    input_low: np.ndarray
    input_high: np.ndarray
    provenance: dict = field(default_factory=dict)
    curves: list = field(default_factory=list)

    @property
    def arch(self):
        return self.network.arch

    def reduced_entropy_and_multiplier(self, W):
        """Surrogate h_hat and beta = grad h_hat at reduced moments W."""
        return self.network.value_and_grad(np.atleast_2d(W))


class NewtonOracleClosure:
    """The Newton solver wrapped in the surrogate interface.

    Used as the exact reference: its test errors against a consistent
    dataset vanish to solver tolerance.
    """

    arch = "newton"

    def __init__(self, config: ClosureConfig, rule=None):
        self.config = config
        self.gamma = config.gamma
        self.rule = config.rule() if rule is None else rule

    def reduced_entropy_and_multiplier(self, W):
        batch = solve_reduced_batch(np.atleast_2d(W), self.config, rule=self.rule)
        if np.any(batch.failed):
            idx = np.flatnonzero(batch.failed)
            raise RuntimeError(f"oracle closure failed on rows {idx.tolist()}")
        return batch.h, batch.beta


class _Adam:
    """Adaptive-moment gradient descent on a list of parameter arrays."""

    def __init__(self, shapes, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for x, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            x -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def _loss_terms(network, W, h_ref, beta_ref, gamma, ms, wq):
    vals, beta_pred = network.value_and_grad(W)
    psi, _ = _reconstruction_terms(beta_pred, gamma, ms, wq)
    res_h = vals - h_ref
    res_beta = beta_pred - beta_ref
    res_u = psi - W
    loss = float(
        np.mean(res_h**2 + np.sum(res_beta**2, axis=1) + np.sum(res_u**2, axis=1))
    )
    errors = {
        "e_h": float(np.mean(res_h**2)),
        "e_beta": float(np.mean(np.sum(res_beta**2, axis=1))),
        "e_u": float(np.mean(np.sum(res_u**2, axis=1))),
    }
    return loss, errors


def loss_parameter_gradients(network, W, h_ref, beta_ref, gamma, ms, wq):
    """Mean three-term loss over a batch and its exact parameter gradient."""
    W = np.atleast_2d(W)
    n_batch = W.shape[0]
    vals, beta_pred = network.value_and_grad(W)
    psi, jac = _reconstruction_terms(beta_pred, gamma, ms, wq)
    res_h = vals - h_ref
    res_beta = beta_pred - beta_ref
    res_u = psi - W
    loss = float(
        np.mean(res_h**2 + np.sum(res_beta**2, axis=1) + np.sum(res_u**2, axis=1))
    )
    a0 = 2.0 * res_h / n_batch
    C = (2.0 * res_beta + 2.0 * np.einsum("bjk,bk->bj", jac, res_u)) / n_batch
    _, _, grads = network.loss_param_grads(W, a0, C)
    return loss, grads


def train(dataset: SampleSet, arch: str, settings: TrainSettings) -> TrainedClosure:
    """Fit a surrogate to a sampled dataset with a 90/10 train/test split.

    Records train/test losses and the three test-error components per
    epoch (epoch 0 is the untrained network).  A non-finite loss aborts
    the run and returns the last finite checkpoint.  The ICNN sign
    constraint is re-established by clamping after every optimizer step.
    """
    if len(dataset) == 0:
        raise ValueError("training requires a nonempty dataset")
    gamma = dataset.config.gamma
    rng = np.random.default_rng(settings.seed)
    rule = build_rule(settings.quad_order)
    ms = basis_matrix(dataset.config.order, rule.nodes)[1:]
    wq = rule.weights

    network = build_network(arch, dataset.config.order, settings.hidden, rng)

    W = dataset.w
    h_ref = dataset.h
    beta_ref = dataset.beta
    n_total = W.shape[0]
    perm = rng.permutation(n_total)
    n_train = max(1, int(settings.split * n_total))
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    if test_idx.size == 0:
        test_idx = train_idx[-1:]
    Wtr, htr, btr = W[train_idx], h_ref[train_idx], beta_ref[train_idx]
    Wte, hte, bte = W[test_idx], h_ref[test_idx], beta_ref[test_idx]
    arrays = [a for _, a in network.params()]
    optimizer = _Adam([a.shape for a in arrays], settings.learning_rate)

    def epoch_row(epoch):
        train_loss, _ = _loss_terms(network, Wtr, htr, btr, gamma, ms, wq)
        test_loss, errs = _loss_terms(network, Wte, hte, bte, gamma, ms, wq)
        return {"epoch": epoch, "train_loss": train_loss, "test_loss": test_loss, **errs}

    curves = [epoch_row(0)]
    checkpoint = network.clone()
    status = "completed"
    t_start = time.perf_counter()
    epochs_run = 0
    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(n_train)
        diverged = False
        for lo in range(0, n_train, settings.batch_size):
            sel = order[lo:lo + settings.batch_size]
            try:
                loss, grads = loss_parameter_gradients(
                    network, Wtr[sel], htr[sel], btr[sel], gamma, ms, wq
                )
            except ExponentOverflowError:
                diverged = True
                break
            if not np.isfinite(loss):
                diverged = True
                break
            optimizer.step(arrays, grads)
            network.project_convex()
        if diverged:
            network = checkpoint
            status = f"diverged at epoch {epoch}; restored last checkpoint"
            break
        row = epoch_row(epoch)
        if not np.isfinite(row["train_loss"]):
            network = checkpoint
            status = f"diverged at epoch {epoch}; restored last checkpoint"
            break
        curves.append(row)
        checkpoint = network.clone()
        epochs_run = epoch
        if settings.target_e_u is not None and row["e_u"] <= settings.target_e_u:
            status = f"reached target e_u at epoch {epoch}"
            break

    from . import __version__

    final = curves[-1]
    provenance = {
        "slabmn_version": __version__,
        "numpy_version": np.__version__,
        "dataset": dataset.config.metadata(),
        "arch": arch,
        "hidden": list(settings.hidden),
        "epochs_requested": settings.epochs,
        "epochs_run": epochs_run,
        "batch_size": settings.batch_size,
        "learning_rate": settings.learning_rate,
        "seed": settings.seed,
        "split": settings.split,
        "status": status,
        "train_seconds": time.perf_counter() - t_start,
        "final_errors": {k: final[k] for k in ("e_h", "e_beta", "e_u")},
    }
    return TrainedClosure(
        network=network,
        gamma=gamma,
        input_low=W.min(axis=0),
        input_high=W.max(axis=0),
        provenance=provenance,
        curves=curves,
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_errors(closure, dataset: SampleSet, rule=None, psi_gamma=None) -> dict:
    """Mean squared test errors of a closure against a dataset.

    e_h compares entropy values, e_beta the reduced multipliers, e_u the
    moments reconstructed from the predicted multiplier through
    psi_gamma.  Passing a gamma = 0 reference dataset together with
    psi_gamma = 0 yields the combined regularization-plus-model errors.
    """
    gamma = closure.gamma if psi_gamma is None else psi_gamma
    quad_order = getattr(dataset.config, "quad_order", DEFAULT_ORDER)
    rule = build_rule(quad_order) if rule is None else rule
    ms = basis_matrix(dataset.config.order, rule.nodes)[1:]
    vals, beta_pred = closure.reduced_entropy_and_multiplier(dataset.w)
    psi, _ = _reconstruction_terms(beta_pred, gamma, ms, rule.weights)
    return {
        "e_h": float(np.mean((vals - dataset.h) ** 2)),
        "e_beta": float(np.mean(np.sum((beta_pred - dataset.beta) ** 2, axis=1))),
        "e_u": float(np.mean(np.sum((psi - dataset.w) ** 2, axis=1))),
    }


def infer_batch(closure, U, rule):
    """Entropy gradients and ansatz densities for rows of moment vectors.

    Assembles g = [h_p - w . beta_p + log(u_0) + 1, beta_p] from the
    closure's reduced value/gradient, then evaluates f = exp(g . m) at
    the quadrature nodes.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if np.any(U[:, 0] <= 0.0):
        raise ValueError("inference requires u_0 > 0 in every row")
    order = U.shape[1] - 1
    W = U[:, 1:] / U[:, 0:1]
    vals, beta = closure.reduced_entropy_and_multiplier(W)
    g0 = vals - np.einsum("ij,ij->i", W, beta) + np.log(U[:, 0]) + 1.0
    G = np.concatenate([g0[:, None], beta], axis=1)
    m = basis_matrix(order, rule.nodes)
    exponents = G @ m
    top = np.max(exponents)
    if not np.isfinite(top) or top > EXPONENT_LIMIT:
        raise ExponentOverflowError(top)
    return G, np.exp(exponents)


def infer(closure, u, rule):
    """Single-moment inference: returns (g, density callable)."""
    G, _ = infer_batch(closure, np.asarray(u, dtype=float)[None, :], rule)
    g = G[0]

    def density(v):
        v = np.asarray(v, dtype=float)
        exponents = np.polynomial.polynomial.polyval(v, g)
        top = np.max(exponents)
        if not np.isfinite(top) or top > EXPONENT_LIMIT:
            raise ExponentOverflowError(top)
        return np.exp(exponents)

    return g, density


# ---------------------------------------------------------------------------
# weight files
# ---------------------------------------------------------------------------

_FORMAT_TAG = "slabmn-closure-v1"


def save_closure(closure: TrainedClosure, path) -> None:
    """Plain-text weight file: header lines, then row-major arrays."""
    net = closure.network
    with open(path, "w") as fh:
        fh.write(f"{_FORMAT_TAG}\n")
        fh.write(f"arch {net.arch}\n")
        fh.write(f"n_inputs {net.n_inputs}\n")
        fh.write("hidden " + " ".join(str(h) for h in net.hidden) + "\n")
        fh.write(f"gamma {closure.gamma:.17g}\n")
        fh.write("input_low " + " ".join(f"{x:.17g}" for x in closure.input_low) + "\n")
        fh.write("input_high " + " ".join(f"{x:.17g}" for x in closure.input_high) + "\n")
        # wall-clock timing is runtime metadata, not part of the artifact
        provenance = {k: v for k, v in closure.provenance.items() if k != "train_seconds"}
        fh.write("provenance " + json.dumps(provenance, sort_keys=True) + "\n")
        for name, array in net.params():
            arr = np.atleast_2d(array)
            fh.write(f"array {name} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_closure(path) -> TrainedClosure:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"{path} is not a {_FORMAT_TAG} weight file")
    header = {}
    idx = 1
    while idx < len(lines) and not lines[idx].startswith("array "):
        key, _, value = lines[idx].partition(" ")
        header[key] = value
        idx += 1
    arch = header["arch"]
    n_inputs = int(header["n_inputs"])
    hidden = tuple(int(x) for x in header["hidden"].split())
    gamma = float(header["gamma"])
    input_low = np.array([float(x) for x in header["input_low"].split()])
    input_high = np.array([float(x) for x in header["input_high"].split()])
    provenance = json.loads(header.get("provenance", "{}"))

    arrays = {}
    while idx < len(lines):
        tag, name, r, c = lines[idx].split()
        assert tag == "array"
        r, c = int(r), int(c)
        block = [
            [float(x) for x in lines[idx + 1 + i].split()]
            for i in range(r)
        ]
        arrays[name] = np.asarray(block, dtype=float)
        idx += 1 + r

    network = build_network(arch, n_inputs, hidden, np.random.default_rng(0))
    ordered = []
    for name, template in network.params():
        arr = arrays[name]
        ordered.append(arr.reshape(template.shape))
    network.set_params(ordered)
    return TrainedClosure(
        network=network,
        gamma=gamma,
        input_low=input_low,
        input_high=input_high,
        provenance=provenance,
        curves=[],
    )
