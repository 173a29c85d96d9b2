"""Discrete virtual values, their positive part, and the regularity check.

For type grid z_1 < ... < z_K with pmf f and cdf F, the virtual value at
index k is

    phi_k = z_k - (z_{k+1} - z_k) * (1 - F_k) / f_k,

with the sentinel z_{K+1} = z_K, so phi_K = z_K exactly.  A bidder's
distribution is regular when phi is non-decreasing in k; regularity is what
makes virtual-value-maximizing allocations monotone, so it is reported per
bidder rather than asserted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AuctionInstance, _frozen_array


@dataclass(frozen=True, eq=False)
class VirtualValueTable:
    """phi and phi^+ = max(phi, 0) per bidder; ragged per bidder."""

    phi: tuple[np.ndarray, ...]
    phi_plus: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(_frozen_array(p) for p in self.phi))
        object.__setattr__(
            self, "phi_plus", tuple(_frozen_array(p) for p in self.phi_plus)
        )

    @property
    def n(self) -> int:
        return len(self.phi)


def virtual_values(instance: AuctionInstance) -> VirtualValueTable:
    """Virtual value table for every bidder and type index.

    phi^+ is precomputed alongside phi because several pipelines consume it.
    """
    phi = []
    for i in range(instance.n):
        z = instance.values(i)
        gaps = instance.space(i).gaps
        f = instance.pmf(i)
        cdf = instance.dist(i).cdf
        # gaps[-1] == 0 makes the hazard term vanish at the top type exactly.
        phi.append(z - gaps * (1.0 - cdf) / f)
    plus = [np.maximum(p, 0.0) for p in phi]
    return VirtualValueTable(tuple(phi), tuple(plus))


def is_regular(table: VirtualValueTable) -> tuple[bool, ...]:
    """True per bidder iff phi is non-decreasing across type indices."""
    return tuple(bool(np.all(np.diff(p) >= 0)) for p in table.phi)


def virtual_values_matrix(
    instance: AuctionInstance, table: VirtualValueTable | None = None
) -> np.ndarray:
    """phi_i(v_i) at every profile, shape ``(n, *instance.shape)``."""
    if table is None:
        table = virtual_values(instance)
    n, shape = instance.n, instance.shape
    out = np.empty((n, *shape))
    for i in range(n):
        view = [1] * n
        view[i] = shape[i]
        out[i] = table.phi[i].reshape(view)
    return out
