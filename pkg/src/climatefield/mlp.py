"""Small fully-connected nets with hand-written reverse-mode gradients.

Training never touches an autodiff framework: every head is shallow enough
that explicit forward caches + backward passes stay simple and fast, and the
gradients are validated against finite differences in the test suite.
"""

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    # Split by sign for stability at large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, dy):
    return dy * y * (1.0 - y)


DENSITY_RAW_MAX = 12.0


def density_activation(raw):
    """sigma = exp(raw), clamped above to keep the quadrature finite."""
    return np.exp(np.minimum(raw, DENSITY_RAW_MAX))


def density_activation_backward(raw, sigma, dsigma):
    return dsigma * np.where(raw < DENSITY_RAW_MAX, sigma, 0.0)


def normalize_rows(v, eps=1e-12):
    """Row-wise v / sqrt(|v|^2 + eps^2); smooth at the origin."""
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps * eps)
    return v / norm, norm


def normalize_rows_backward(v, norm, dn):
    inv = 1.0 / norm
    unit = v * inv
    dot = np.sum(unit * dn, axis=-1, keepdims=True)
    return (dn - unit * dot) * inv


class Mlp:
    """Dense layers with ReLU between them and a linear output layer."""

    def __init__(self, sizes, rng, dtype=np.float32, out_bias=0.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
            b = np.zeros(fan_out, dtype=dtype)
            self.weights.append(w)
            self.biases.append(b)
        if out_bias:
            self.biases[-1] += np.asarray(out_bias, dtype=dtype)

    @property
    def n_layers(self):
        return len(self.weights)

    def forward(self, x):
        """Returns (output, cache); cache holds layer inputs for backward."""
        inputs = [x]
        h = x
        for i in range(self.n_layers):
            z = h @ self.weights[i] + self.biases[i]
            if i < self.n_layers - 1:
                z = relu(z)
            if i < self.n_layers - 1:
                inputs.append(z)
            h = z
        return h, inputs

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, dout):
        """Gradients for one forward pass.

        Returns (dx, [(dW, db) per layer]) with grads in float64.
        """
        grads = [None] * self.n_layers
        g = np.asarray(dout, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            if i < self.n_layers - 1:
                # cache[i+1] is relu(z_i); its positivity marks active units
                g = g * (cache[i + 1] > 0)
            dw = h_in.astype(np.float64).T @ g
            db = g.sum(axis=0)
            grads[i] = (dw, db)
            if i > 0:
                g = g @ self.weights[i].astype(np.float64).T
        dx = g @ self.weights[0].astype(np.float64).T if self.n_layers else g
        return dx, grads

    def param_items(self, prefix):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}.w{i}", w))
            out.append((f"{prefix}.b{i}", b))
        return out

    def apply_param(self, name, value):
        kind, idx = name[0], int(name[1:])
        if kind == "w":
            self.weights[idx] = value
        else:
            self.biases[idx] = value
