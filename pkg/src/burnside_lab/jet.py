"""Second-order forward-mode dual numbers in two variables.

A ``Jet`` holds, for a batch of N evaluation points, the value of a function of two
local coordinates (s, t) together with its gradient and (optionally) Hessian:

    val  shape (N,)
    d    shape (N, 2)
    h    shape (N, 2, 2)   or None for first-order-only propagation

Jets take part in numpy ufuncs (``np.sin(jet)``, ``array * jet``), so the same
closed-form primitive formulas run on plain arrays and on jets.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("val", "d", "h")

    def __init__(self, val, d, h=None):
        self.val = val
        self.d = d
        self.h = h

    @classmethod
    def variable(cls, val, index: int, second_order: bool = True) -> "Jet":
        val = np.asarray(val, dtype=float)
        d = np.zeros(val.shape + (2,))
        d[..., index] = 1.0
        h = np.zeros(val.shape + (2, 2)) if second_order else None
        return cls(val, d, h)

    @classmethod
    def constant(cls, val, like: "Jet") -> "Jet":
        val = np.broadcast_to(np.asarray(val, dtype=float), like.val.shape).copy()
        h = None if like.h is None else np.zeros(like.h.shape)
        return cls(val, np.zeros(like.d.shape), h)

    @property
    def second_order(self) -> bool:
        return self.h is not None

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx) -> "Jet":
        return Jet(self.val[idx], self.d[idx], None if self.h is None else self.h[idx])

    def __setitem__(self, idx, other: "Jet"):
        self.val[idx] = other.val
        self.d[idx] = other.d
        if self.h is not None:
            self.h[idx] = other.h

    def copy(self) -> "Jet":
        return Jet(self.val.copy(), self.d.copy(), None if self.h is None else self.h.copy())

    def __repr__(self):
        return f"Jet(val={self.val!r}, d={self.d!r}, h={'None' if self.h is None else '...'})"

    # -- arithmetic ---------------------------------------------------------------

    def _unary(self, f0, f1, f2) -> "Jet":
        d = f1[..., None] * self.d
        h = None
        if self.h is not None:
            h = f1[..., None, None] * self.h + f2[..., None, None] * _outer(self.d, self.d)
        return Jet(f0, d, h)

    def __neg__(self):
        return Jet(-self.val, -self.d, None if self.h is None else -self.h)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val + other.val, self.d + other.d, _hadd(self.h, other.h))
        return Jet(self.val + other, self.d, self.h)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.val - other.val, self.d - other.d, _hsub(self.h, other.h))
        return Jet(self.val - other, self.d, self.h)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            val = a.val * b.val
            d = a.d * b.val[..., None] + b.d * a.val[..., None]
            h = None
            if a.h is not None and b.h is not None:
                cross = _outer(a.d, b.d)
                h = (a.h * b.val[..., None, None] + b.h * a.val[..., None, None]
                     + cross + np.swapaxes(cross, -1, -2))
            return Jet(val, d, h)
        c = np.asarray(other, dtype=float)
        return Jet(self.val * c, self.d * c[..., None],
                   None if self.h is None else self.h * c[..., None, None])

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        inv = 1.0 / self.val
        return self._unary(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if k == 2:
            return self * self
        v = self.val
        return self._unary(v ** k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))

    # -- elementary functions ---------------------------------------------------

    def sin(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._unary(s, c, -s)

    def cos(self):
        s, c = np.sin(self.val), np.cos(self.val)
        return self._unary(c, -s, -c)

    def sqrt(self):
        r = np.sqrt(self.val)
        return self._unary(r, 0.5 / r, -0.25 / (r * self.val))

    def exp(self):
        e = np.exp(self.val)
        return self._unary(e, e, e)

    def log(self):
        inv = 1.0 / self.val
        return self._unary(np.log(self.val), inv, -inv * inv)

    _UFUNCS = {
        np.add: lambda a, b: a + b if isinstance(a, Jet) else b + a,
        np.subtract: lambda a, b: a - b if isinstance(a, Jet) else (-b) + a,
        np.multiply: lambda a, b: a * b if isinstance(a, Jet) else b * a,
        np.true_divide: lambda a, b: a / b if isinstance(a, Jet) else b.__rtruediv__(a),
        np.negative: lambda a: -a,
        np.sin: lambda a: a.sin(),
        np.cos: lambda a: a.cos(),
        np.sqrt: lambda a: a.sqrt(),
        np.exp: lambda a: a.exp(),
        np.log: lambda a: a.log(),
    }

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or kwargs or ufunc not in Jet._UFUNCS:
            return NotImplemented
        return Jet._UFUNCS[ufunc](*inputs)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _hadd(a, b):
    if a is None or b is None:
        return None
    return a + b


def _hsub(a, b):
    if a is None or b is None:
        return None
    return a - b


def where(mask, a, b):
    """Elementwise select that works for arrays and jets (mask on the batch axis)."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.where(mask, a, b)
    ref = a if isinstance(a, Jet) else b
    a = a if isinstance(a, Jet) else Jet.constant(a, ref)
    b = b if isinstance(b, Jet) else Jet.constant(b, ref)
    h = None
    if a.h is not None and b.h is not None:
        h = np.where(mask[..., None, None], a.h, b.h)
    return Jet(np.where(mask, a.val, b.val), np.where(mask[..., None], a.d, b.d), h)


def value(x):
    return x.val if isinstance(x, Jet) else np.asarray(x, dtype=float)
