"""Stochastic Galerkin operator and right-hand side in TT form.

The operator is K_0 (x) Delta_0 + sum_l K_l (x) K_l^omega where K_0, K_l are
stiffness matrices weighted by kappa_bar and v_l and K_l^omega is the
Galerkin matrix of the l-th PCE tensor.  With the mean carried as channel 0
of the stochastic TT (border L+1), the whole operator is a TT matrix whose
first core holds the L+1 spatial matrices and whose stochastic cores are

    K^(m)[s, a, b, t] = sum_nu Delta[a, b, nu] kappa^(m)[s, nu, t],

so its ranks equal those of the kappa TT.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError
from .fem import StiffnessAssembler
from .hermite import delta_tensor
from .tt import TTMatrix, TTTensor


def stochastic_cores(kappa_tt, p):
    """Delta-contract every core of kappa_tt (mode size 2p+1) to (r, p+1, p+1, r')."""
    D = delta_tensor(p, 2 * p)
    out = []
    for m, c in enumerate(kappa_tt.cores):
        if c.shape[1] != 2 * p + 1:
            raise InvalidInputError(
                f"core {m} has mode size {c.shape[1]}, expected {2 * p + 1}")
        out.append(np.einsum("abn,snt->sabt", D, c))
    return out


@dataclass
class StochasticOperator:
    """TT matrix with a sparse spatial first core.

    spatial: list of R_0 sparse (Nint x Nint) matrices, entry 0 the mean-field
    stiffness; cores: stochastic 4-way cores.  The mean-field channel is
    rank index 0 at every bond.
    """
    spatial: list
    cores: list

    @property
    def ranks(self):
        return tuple([1, len(self.spatial)] + [c.shape[3] for c in self.cores])

    @property
    def n_dof(self):
        return self.spatial[0].shape[0]

    @property
    def mode_sizes(self):
        return tuple([self.n_dof] + [c.shape[1] for c in self.cores])

    def to_ttmatrix(self):
        """TTMatrix with a dense spatial core (small problems only)."""
        first = np.stack([K.toarray() for K in self.spatial], axis=-1)[None]
        return TTMatrix([first] + list(self.cores))

    def mean_field(self):
        """Spatial matrix K_0 and the diagonal entries of each Delta_0 core."""
        return self.spatial[0], [np.diag(c[0, :, :, 0]).copy() for c in self.cores]


def spatial_matrices(mesh, spatial_fields, sparse=True):
    """Stiffness matrices for node fields (N, R) -> list of R matrices."""
    asm = StiffnessAssembler(mesh)
    F = np.asarray(spatial_fields, dtype=float)
    if sparse:
        return [asm.sparse(F[:, j]) for j in range(F.shape[1])]
    return [asm.dense(F[:, j]) for j in range(F.shape[1])]


def assemble_operator_tt(spatial_blocks, stoch_cores):
    """Glue spatial matrices (one per channel) onto the stochastic cores."""
    blocks = [sp.csr_matrix(K) if not sp.issparse(K) else K.tocsr() for K in spatial_blocks]
    if stoch_cores and len(blocks) != stoch_cores[0].shape[0]:
        raise InvalidInputError(
            f"{len(blocks)} spatial matrices for border rank {stoch_cores[0].shape[0]}")
    return StochasticOperator(blocks, [np.asarray(c, dtype=float) for c in stoch_cores])


def assemble_rhs_tt(f0, M, p):
    """f0 (x) e_0 (x) ... (x) e_0 as a rank-1 TT."""
    e0 = np.zeros((1, p + 1, 1))
    e0[0, 0, 0] = 1.0
    return TTTensor([np.asarray(f0, dtype=float).reshape(1, -1, 1)] + [e0] * M)


def build_operator(mesh, kappa, p):
    """Operator from a KappaTT (see random_field.build_kappa_tt)."""
    mats = spatial_matrices(mesh, kappa.spatial)
    return assemble_operator_tt(mats, stochastic_cores(kappa.stochastic, p))
