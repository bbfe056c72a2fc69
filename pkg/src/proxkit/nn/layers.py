"""Layer primitives with explicit forward/backward passes, in float64.

Every layer caches what its backward pass needs during forward, accumulates
parameter gradients into ``Parameter.grad`` and returns the gradient with
respect to its input. Forward/backward for one network instance is single
threaded; trained parameters are plain arrays and safe to share read-only.
"""

from __future__ import annotations

import numpy as np


class Parameter:
    """A trainable array with an accumulated gradient buffer."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Parameter]:
        return []


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.n_in = n_in
        self.n_out = n_out
        self.W = Parameter(glorot_uniform(rng, (n_in, n_out), n_in, n_out), "W")
        self.b = Parameter(np.zeros(n_out), "b")
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(
                f"linear layer expects (batch, {self.n_in}), got {x.shape}"
            )
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x = self._x
        self.W.grad += x.T @ grad
        self.b.grad += grad.sum(axis=0)
        return grad @ self.W.value.T

    def params(self) -> list[Parameter]:
        return [self.W, self.b]


class ReLU(Layer):
    def __init__(self) -> None:
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return np.where(self._mask, grad, 0.0)


class Conv1d(Layer):
    """1-D convolution, stride 1, no padding, optional dilation.

    The public layout is (batch, channels, length). ``channels_last=True``
    switches to (batch, length, channels), which keeps the im2col gather
    contiguous and is what the model builder uses; the math is identical.
    """

    def __init__(
        self,
        ch_in: int,
        ch_out: int,
        kernel_size: int,
        rng: np.random.Generator,
        dilation: int = 1,
        channels_last: bool = False,
    ):
        self.ch_in = ch_in
        self.ch_out = ch_out
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.channels_last = channels_last
        fan_in = ch_in * kernel_size
        fan_out = ch_out * kernel_size
        self.W = Parameter(
            glorot_uniform(rng, (ch_out, ch_in, kernel_size), fan_in, fan_out), "W"
        )
        self.b = Parameter(np.zeros(ch_out), "b")
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def min_length(self) -> int:
        return (self.kernel_size - 1) * self.dilation + 1

    def out_length(self, length: int) -> int:
        return length - (self.kernel_size - 1) * self.dilation

    def _w2(self) -> np.ndarray:
        # (ch_out, k * ch_in), matching the (length, tap, channel) im2col order
        return self.W.value.transpose(0, 2, 1).reshape(
            self.ch_out, self.kernel_size * self.ch_in
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError(f"conv1d expects a 3-D input, got {x.shape}")
        ch_axis, len_axis = (2, 1) if self.channels_last else (1, 2)
        if x.shape[ch_axis] != self.ch_in:
            raise ValueError(
                f"conv1d expects {self.ch_in} input channels on axis {ch_axis}, got {x.shape}"
            )
        length = x.shape[len_axis]
        if length < self.min_length():
            raise ValueError(
                f"conv1d input length {length} below minimum {self.min_length()} "
                f"(kernel {self.kernel_size}, dilation {self.dilation})"
            )
        batch = x.shape[0]
        l_out = self.out_length(length)
        k, d = self.kernel_size, self.dilation
        xl = x if self.channels_last else x.transpose(0, 2, 1)
        # im2col over (length, tap, channel); contiguous copies in channels-last
        cols = np.empty((batch, l_out, k, self.ch_in))
        for j in range(k):
            cols[:, :, j, :] = xl[:, j * d : j * d + l_out, :]
        cols2 = cols.reshape(batch * l_out, k * self.ch_in)
        y = cols2 @ self._w2().T
        y += self.b.value
        self._cols = cols2
        self._in_shape = x.shape
        y = y.reshape(batch, l_out, self.ch_out)
        return y if self.channels_last else np.ascontiguousarray(y.transpose(0, 2, 1))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        batch = self._in_shape[0]
        length = self._in_shape[1] if self.channels_last else self._in_shape[2]
        l_out = self.out_length(length)
        k, d = self.kernel_size, self.dilation
        gl = grad if self.channels_last else grad.transpose(0, 2, 1)
        g2 = gl.reshape(batch * l_out, self.ch_out)
        dw2 = g2.T @ self._cols
        self.W.grad += dw2.reshape(self.ch_out, k, self.ch_in).transpose(0, 2, 1)
        self.b.grad += g2.sum(axis=0)
        dcols = (g2 @ self._w2()).reshape(batch, l_out, k, self.ch_in)
        dxl = np.zeros((batch, length, self.ch_in))
        for j in range(k):
            dxl[:, j * d : j * d + l_out, :] += dcols[:, :, j, :]
        return dxl if self.channels_last else dxl.transpose(0, 2, 1)

    def params(self) -> list[Parameter]:
        return [self.W, self.b]


class MaxPool1d(Layer):
    """Non-overlapping max pooling; a trailing partial window is dropped.

    Backward routes the gradient to the argmax, first index on ties.
    ``indices_`` holds the winning positions along the length axis.
    """

    def __init__(self, window: int = 2, channels_last: bool = False):
        self.window = window
        self.channels_last = channels_last
        self._indices: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError(f"maxpool1d expects a 3-D input, got {x.shape}")
        len_axis = 1 if self.channels_last else 2
        length = x.shape[len_axis]
        if length < self.window:
            raise ValueError(f"maxpool1d input length {length} below window {self.window}")
        l_out = length // self.window
        w = self.window
        self._in_shape = x.shape
        if self.channels_last:
            batch, _, ch = x.shape
            xr = x[:, : l_out * w, :].reshape(batch, l_out, w, ch)
            idx = xr.argmax(axis=2)
            self._indices = idx
            self.indices_ = idx + w * np.arange(l_out)[None, :, None]
            return np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0, :]
        batch, ch, _ = x.shape
        xr = x[:, :, : l_out * w].reshape(batch, ch, l_out, w)
        idx = xr.argmax(axis=3)
        self._indices = idx
        self.indices_ = idx + w * np.arange(l_out)
        return np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]

    def backward(self, grad: np.ndarray) -> np.ndarray:
        w = self.window
        if self.channels_last:
            batch, length, ch = self._in_shape
            l_out = length // w
            dxr = np.zeros((batch, l_out, w, ch))
            np.put_along_axis(dxr, self._indices[:, :, None, :], grad[:, :, None, :], axis=2)
            dx = np.zeros(self._in_shape)
            dx[:, : l_out * w, :] = dxr.reshape(batch, l_out * w, ch)
            return dx
        batch, ch, length = self._in_shape
        l_out = length // w
        dxr = np.zeros((batch, ch, l_out, w))
        np.put_along_axis(dxr, self._indices[..., None], grad[..., None], axis=3)
        dx = np.zeros(self._in_shape)
        dx[:, :, : l_out * w] = dxr.reshape(batch, ch, l_out * w)
        return dx


class GRULayer(Layer):
    """Gated recurrent unit over (batch, T, features) with full BPTT.

    Gate equations, with sigma the logistic function:
        z = sigma(x Wz + h Uz + bz)
        r = sigma(x Wr + h Ur + br)
        c = tanh(x Wc + (r * h) Uc + bc)
        h' = (1 - z) * h + z * c

    Input projections for all T steps run as a single GEMM; the recurrence
    itself is sequential. ``return_sequence`` controls whether forward yields
    all hidden states (for stacking) or only the final one.
    """

    def __init__(
        self,
        n_in: int,
        hidden: int,
        rng: np.random.Generator,
        return_sequence: bool = False,
    ):
        self.n_in = n_in
        self.hidden = hidden
        self.return_sequence = return_sequence
        h = hidden
        wx = np.concatenate(
            [glorot_uniform(rng, (n_in, h), n_in, h) for _ in range(3)], axis=1
        )
        uzr = np.concatenate(
            [glorot_uniform(rng, (h, h), h, h) for _ in range(2)], axis=1
        )
        self.Wx = Parameter(wx, "Wx")  # blocks: z | r | candidate
        self.Uzr = Parameter(uzr, "Uzr")  # blocks: z | r
        self.Uc = Parameter(glorot_uniform(rng, (h, h), h, h), "Uc")
        self.b = Parameter(np.zeros(3 * h), "b")
        self._cache: tuple | None = None

    def step(self, x_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
        """One recurrence step from an explicit hidden state (no gradient cache)."""
        h = self.hidden
        pre = x_t @ self.Wx.value + self.b.value
        hu = h_prev @ self.Uzr.value
        z = _sigmoid(pre[:, :h] + hu[:, :h])
        r = _sigmoid(pre[:, h : 2 * h] + hu[:, h:])
        c = np.tanh(pre[:, 2 * h :] + (r * h_prev) @ self.Uc.value)
        return (1.0 - z) * h_prev + z * c

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ValueError(f"gru expects (batch, steps, {self.n_in}), got {x.shape}")
        batch, steps, _ = x.shape
        h = self.hidden
        pre_x = (x.reshape(batch * steps, self.n_in) @ self.Wx.value + self.b.value).reshape(
            batch, steps, 3 * h
        )
        hs_prev = np.empty((batch, steps, h))
        zs = np.empty((batch, steps, h))
        rs = np.empty((batch, steps, h))
        cs = np.empty((batch, steps, h))
        h_t = np.zeros((batch, h))
        for t in range(steps):
            hs_prev[:, t] = h_t
            hu = h_t @ self.Uzr.value
            z = _sigmoid(pre_x[:, t, :h] + hu[:, :h])
            r = _sigmoid(pre_x[:, t, h : 2 * h] + hu[:, h:])
            c = np.tanh(pre_x[:, t, 2 * h :] + (r * h_t) @ self.Uc.value)
            h_t = (1.0 - z) * h_t + z * c
            zs[:, t], rs[:, t], cs[:, t] = z, r, c
        self._cache = (x, hs_prev, zs, rs, cs)
        return (
            np.concatenate([hs_prev[:, 1:], h_t[:, None, :]], axis=1)
            if self.return_sequence
            else h_t
        )

    def backward(self, grad: np.ndarray) -> np.ndarray:
        x, hs_prev, zs, rs, cs = self._cache
        batch, steps, _ = x.shape
        h = self.hidden
        d_pre = np.empty((batch, steps, 3 * h))
        d_uzr = np.zeros_like(self.Uzr.value)
        d_uc = np.zeros_like(self.Uc.value)
        carry = np.zeros((batch, h))
        for t in range(steps - 1, -1, -1):
            dh = carry.copy()
            if self.return_sequence:
                dh += grad[:, t]
            elif t == steps - 1:
                dh += grad
            h_prev, z, r, c = hs_prev[:, t], zs[:, t], rs[:, t], cs[:, t]
            d_pre_z = dh * (c - h_prev) * z * (1.0 - z)
            d_pre_c = dh * z * (1.0 - c * c)
            dh_prev = dh * (1.0 - z)
            drh = d_pre_c @ self.Uc.value.T
            d_uc += (r * h_prev).T @ d_pre_c
            dh_prev += drh * r
            d_pre_r = drh * h_prev * r * (1.0 - r)
            d_pre_zr = np.concatenate([d_pre_z, d_pre_r], axis=1)
            dh_prev += d_pre_zr @ self.Uzr.value.T
            d_uzr += h_prev.T @ d_pre_zr
            d_pre[:, t, :h] = d_pre_z
            d_pre[:, t, h : 2 * h] = d_pre_r
            d_pre[:, t, 2 * h :] = d_pre_c
            carry = dh_prev
        self.Uzr.grad += d_uzr
        self.Uc.grad += d_uc
        d_pre2 = d_pre.reshape(batch * steps, 3 * h)
        self.Wx.grad += x.reshape(batch * steps, self.n_in).T @ d_pre2
        self.b.grad += d_pre2.sum(axis=0)
        return (d_pre2 @ self.Wx.value.T).reshape(x.shape)

    def params(self) -> list[Parameter]:
        return [self.Wx, self.Uzr, self.Uc, self.b]


class Transpose(Layer):
    def __init__(self, axes: tuple[int, ...]):
        self.axes = axes
        self._inverse = tuple(np.argsort(axes))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x.transpose(self.axes))

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(grad.transpose(self._inverse))


class Flatten(Layer):
    def __init__(self) -> None:
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._in_shape)


class Reshape(Layer):
    """Reshape every sample to a fixed tail shape, keeping the batch axis."""

    def __init__(self, tail: tuple[int, ...]):
        self.tail = tail
        self._in_shape: tuple[int, ...] | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + self.tail)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad.reshape(self._in_shape)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]

    def named_params(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for i, layer in enumerate(self.layers):
            for p in layer.params():
                out[f"{i}.{p.name}"] = p
        return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    ``targets`` is either an int class-index vector or a (batch, classes)
    array of soft target distributions (as produced by mix-up).
    """
    if logits.ndim != 2:
        raise ValueError(f"logits must be (batch, classes), got {logits.shape}")
    targets = np.asarray(targets)
    if targets.ndim == 1:
        t = np.zeros_like(logits)
        t[np.arange(logits.shape[0]), targets.astype(np.int64)] = 1.0
    else:
        if targets.shape != logits.shape:
            raise ValueError(
                f"soft targets shape {targets.shape} does not match logits {logits.shape}"
            )
        t = targets
    logp = log_softmax(logits)
    loss = float(-(t * logp).sum(axis=1).mean())
    grad = (softmax(logits) - t) / logits.shape[0]
    return loss, grad


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over the batch and its gradient w.r.t. ``pred``."""
    flat = pred.reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if flat.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target {target.shape}")
    diff = flat - target
    loss = float((diff * diff).mean())
    grad = (2.0 / flat.shape[0]) * diff
    return loss, grad.reshape(pred.shape)
