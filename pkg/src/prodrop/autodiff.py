"""Dense float64 tensors with reverse-mode automatic differentiation.

Every layer of the model is written in terms of the operations defined here.
A :class:`Tensor` wraps a numpy array; operations on tensors that require
gradients record a backward closure so that :func:`backward` can propagate
gradients through the graph in reverse topological order.

Broadcasting is deliberately limited: binary elementwise operations require
equal shapes or a 0-d scalar operand.  Row/column broadcasts needed by the
layers (bias addition, gating) are explicit operations (:func:`add_row`,
:func:`mul_row`, :func:`mul_col`).
"""

from contextlib import contextmanager

import numpy as np

from .errors import ConfigError, DimensionError, DomainError, InvalidMaskError, NumericalError

_grad_enabled = True
_kink_log = None


@contextmanager
def record_kinks():
    """Collect the activity pattern of every relu evaluated inside the block.

    Finite-difference checks use this to notice when a perturbation moves a
    relu input across zero.
    """
    global _kink_log
    previous = _kink_log
    _kink_log = []
    try:
        yield _kink_log
    finally:
        _kink_log = previous


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference only)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """A float64 array that participates in the differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = ()
        self._backward = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data, parents, backward_fn, op):
    # a finite sum proves every entry finite; the full test only runs otherwise
    if not np.isfinite(data.sum()) and not np.isfinite(data).all():
        raise NumericalError(f"non-finite values produced by {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out.grad = np.zeros_like(data) if needs else None
    out._parents = tuple(parents) if needs else ()
    out._backward = backward_fn if needs else None
    return out


def _accumulate(tensor, value):
    if tensor.requires_grad:
        tensor.grad += value


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Populate ``.grad`` of every ancestor of the scalar ``loss``.

    Leaf gradients accumulate across calls; intermediate gradients are reset
    on each call so repeated calls add exactly one more copy of the gradient.
    """
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if node._backward is not None:
            node.grad = np.zeros_like(node.data)
    loss.grad = loss.grad + 1.0
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ----------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} and {b.shape}")

    def _bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), _bw, "matmul")


def transpose(x):
    if x.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")

    def _bw(g):
        _accumulate(x, g.T)

    return _result(x.data.T.copy(), (x,), _bw, "transpose")


def reshape(x, shape):
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")

    def _bw(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(x.data.reshape(shape).copy(), (x,), _bw, "reshape")


def bilinear(left, weight, right):
    """Row-wise bilinear forms: ``out[n, t] = left[n] @ weight[t] @ right[n]``."""
    if (left.ndim != 2 or right.ndim != 2 or weight.ndim != 3
            or left.shape[0] != right.shape[0]
            or weight.shape[1] != left.shape[1] or weight.shape[2] != right.shape[1]):
        raise DimensionError(
            f"bilinear shape mismatch: {left.shape}, {weight.shape}, {right.shape}")
    a, w, b = left.data, weight.data, right.data

    def _bw(g):
        _accumulate(left, np.einsum("nt,tij,nj->ni", g, w, b))
        _accumulate(weight, np.einsum("nt,ni,nj->tij", g, a, b))
        _accumulate(right, np.einsum("nt,ni,tij->nj", g, a, w))

    return _result(np.einsum("ni,tij,nj->nt", a, w, b), (left, weight, right), _bw, "bilinear")


# ----------------------------------------------------------------------------
# elementwise


def _check_binary(a, b, op):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op} shape mismatch: {a.shape} and {b.shape}")


def _reduce_to(grad, shape):
    return grad if grad.shape == shape else np.asarray(grad.sum()).reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")

    def _bw(g):
        _accumulate(a, _reduce_to(g, a.shape))
        _accumulate(b, _reduce_to(g, b.shape))

    return _result(a.data + b.data, (a, b), _bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")

    def _bw(g):
        _accumulate(a, _reduce_to(g, a.shape))
        _accumulate(b, -_reduce_to(g, b.shape))

    return _result(a.data - b.data, (a, b), _bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")

    def _bw(g):
        _accumulate(a, _reduce_to(g * b.data, a.shape))
        _accumulate(b, _reduce_to(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), _bw, "mul")


def neg(x):
    def _bw(g):
        _accumulate(x, -g)

    return _result(-x.data, (x,), _bw, "neg")


def tanh(x):
    y = np.tanh(x.data)

    def _bw(g):
        _accumulate(x, g * (1.0 - y * y))

    return _result(y, (x,), _bw, "tanh")


def sigmoid(x):
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def _bw(g):
        _accumulate(x, g * y * (1.0 - y))

    return _result(y, (x,), _bw, "sigmoid")


def relu(x):
    active = x.data > 0
    if _kink_log is not None:
        _kink_log.append(active)

    def _bw(g):
        _accumulate(x, g * active)

    return _result(np.where(active, x.data, 0.0), (x,), _bw, "relu")


def exp(x):
    y = np.exp(x.data)

    def _bw(g):
        _accumulate(x, g * y)

    return _result(y, (x,), _bw, "exp")


def log(x):
    if np.any(x.data <= 0):
        raise DomainError("log of a non-positive value")

    def _bw(g):
        _accumulate(x, g / x.data)

    return _result(np.log(x.data), (x,), _bw, "log")


_ELEMENTWISE = {"add": add, "mul": mul, "tanh": tanh, "sigmoid": sigmoid, "relu": relu}


def elementwise(op, *inputs):
    """Dispatch one of ``add``, ``mul``, ``tanh``, ``sigmoid``, ``relu`` by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ConfigError(f"unknown elementwise op {op!r}") from None
    return fn(*inputs)


def add_row(x, v):
    """Add vector ``v`` of length d to every row of ``x`` [n x d]."""
    if x.ndim != 2 or v.shape != (x.shape[1],):
        raise DimensionError(f"add_row shape mismatch: {x.shape} and {v.shape}")

    def _bw(g):
        _accumulate(x, g)
        _accumulate(v, g.sum(axis=0))

    return _result(x.data + v.data, (x, v), _bw, "add_row")


def mul_row(x, v):
    """Multiply every row of ``x`` [n x d] elementwise by ``v`` [d]."""
    if x.ndim != 2 or v.shape != (x.shape[1],):
        raise DimensionError(f"mul_row shape mismatch: {x.shape} and {v.shape}")

    def _bw(g):
        _accumulate(x, g * v.data)
        _accumulate(v, (g * x.data).sum(axis=0))

    return _result(x.data * v.data, (x, v), _bw, "mul_row")


def mul_col(x, c):
    """Scale row i of ``x`` [n x d] by ``c[i]`` where ``c`` is [n x 1]."""
    if x.ndim != 2 or c.shape != (x.shape[0], 1):
        raise DimensionError(f"mul_col shape mismatch: {x.shape} and {c.shape}")

    def _bw(g):
        _accumulate(x, g * c.data)
        _accumulate(c, (g * x.data).sum(axis=1, keepdims=True))

    return _result(x.data * c.data, (x, c), _bw, "mul_col")


# ----------------------------------------------------------------------------
# reductions and indexing


def sum_all(x):
    def _bw(g):
        _accumulate(x, np.full(x.shape, float(g)))

    return _result(np.asarray(x.data.sum()), (x,), _bw, "sum")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat shape mismatch along axis {axis}: {shapes}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t.grad += g[tuple(index)]

    return _result(data, tensors, _bw, "concat")


def gather_rows(x, index):
    """Select rows of ``x`` by integer index; repeated rows accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)

    def _bw(g):
        if x.requires_grad:
            np.add.at(x.grad, index, g)

    return _result(x.data[index], (x,), _bw, "gather_rows")


def take(x, index):
    """Gather individual entries of ``x`` at ``index`` (a tuple of index arrays)."""
    index = tuple(np.asarray(i, dtype=np.int64) for i in index)

    def _bw(g):
        if x.requires_grad:
            np.add.at(x.grad, index, g)

    return _result(np.asarray(x.data[index], dtype=np.float64), (x,), _bw, "take")


# ----------------------------------------------------------------------------
# probability


def softmax(x, mask=None):
    """Softmax over the last axis of a vector or of each matrix row.

    ``mask`` marks admissible positions with True; masked positions receive
    probability exactly 0 and therefore exactly zero gradient.
    """
    if x.ndim not in (1, 2):
        raise DimensionError(f"softmax needs a vector or matrix, got shape {x.shape}")
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match {x.shape}")
        if not np.all(mask.any(axis=-1)):
            raise InvalidMaskError("softmax mask leaves no admissible position")
    shifted = np.where(mask, x.data, -np.inf)
    top = shifted.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(np.where(mask, x.data - top, 0.0)), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        _accumulate(x, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _result(p, (x,), _bw, "softmax")


def cross_entropy(pred_dist, gold_index):
    """``-log pred_dist[gold_index]`` for a probability vector."""
    if pred_dist.ndim != 1:
        raise DimensionError(f"cross_entropy needs a vector, got shape {pred_dist.shape}")
    if pred_dist.data[gold_index] <= 0:
        raise DomainError(f"gold index {gold_index} has zero probability")
    return neg(sum_all(log(take(pred_dist, (np.array([gold_index]),)))))


def nll(probs, rows, cols):
    """Summed negative log-likelihood of entries ``probs[rows[i], cols[i]]``."""
    picked = take(probs, (rows, cols))
    if np.any(picked.data <= 0):
        raise DomainError("gold entry has zero probability")
    return neg(sum_all(log(picked)))


def dropout(x, rate, training, rng):
    """Inverted dropout: survivors are scaled by 1/(1-rate); identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ----------------------------------------------------------------------------
# parameters


class ParamStore:
    """Ordered mapping from parameter path to trainable tensor."""

    def __init__(self, seed=0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params = {}

    def add(self, path, value):
        if path in self._params:
            raise ConfigError(f"duplicate parameter path {path!r}")
        tensor = Tensor(value, requires_grad=True)
        self._params[path] = tensor
        return tensor

    def uniform(self, path, shape, scale):
        return self.add(path, self.rng.uniform(-scale, scale, size=shape))

    def glorot(self, path, shape):
        fan_in, fan_out = shape[-2], shape[-1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(path, self.rng.uniform(-limit, limit, size=shape))

    def zeros(self, path, shape):
        return self.add(path, np.zeros(shape))

    def __getitem__(self, path):
        return self._params[path]

    def __contains__(self, path):
        return path in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def paths(self, prefix=""):
        return [p for p in self._params if p.startswith(prefix)]

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.zero_grad()

    def state_dict(self):
        return {path: t.data.copy() for path, t in self._params.items()}

    def load_state_dict(self, state):
        missing = set(self._params) ^ set(state)
        if missing:
            raise ConfigError(f"parameter set mismatch: {sorted(missing)}")
        for path, tensor in self._params.items():
            value = np.asarray(state[path], dtype=np.float64)
            if value.shape != tensor.shape:
                raise DimensionError(
                    f"parameter {path!r}: stored shape {value.shape} != {tensor.shape}")
            tensor.data = value.copy()
            tensor.zero_grad()
