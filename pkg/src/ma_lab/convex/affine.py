"""Orientation preserving affine maps y -> A y + b."""
from functools import cached_property

import numpy as np


class AffineMap:
    """Invertible affine map with ``det A > 0``.

    ``norm`` is the operator norm of the linear part and ``adjoint_norm``
    that of its transpose (they coincide for real matrices, but both are
    computed so the identity ||A^T A|| = ||A^T|| ||A|| can be checked).
    """

    def __init__(self, A, b=None):
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("linear part must be square")
        b = np.zeros(len(A)) if b is None else np.array(b, dtype=float)
        det = float(np.linalg.det(A))
        if not det > 0:
            raise ValueError(f"affine map must preserve orientation (det={det})")
        A.setflags(write=False)
        b.setflags(write=False)
        self.A = A
        self.b = b
        self.det = det

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @property
    def dim(self):
        return len(self.A)

    @cached_property
    def norm(self):
        return float(np.linalg.norm(self.A, 2))

    @cached_property
    def adjoint_norm(self):
        return float(np.linalg.norm(self.A.T, 2))

    @cached_property
    def singular_values(self):
        return np.linalg.svd(self.A, compute_uv=False)

    @cached_property
    def inverse(self):
        Ainv = np.linalg.inv(self.A)
        return AffineMap(Ainv, -Ainv @ self.b)

    def size(self):
        """||T|| ||T*|| / (det T)^(2/n), the scale attached to a normalization."""
        return self.norm * self.adjoint_norm / self.det ** (2.0 / self.dim)

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.A.T + self.b

    def compose(self, other):
        """self o other."""
        return AffineMap(self.A @ other.A, self.A @ other.b + self.b)

    __matmul__ = compose

    def __repr__(self):
        return f"AffineMap(det={self.det:.6g}, norm={self.norm:.6g})"
