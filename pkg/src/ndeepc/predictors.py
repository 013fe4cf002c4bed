"""Interpolation algebra linking the trained network to the data matrices.

A prepared :class:`DeepcContext` freezes everything the online problems
need: the feature data matrix, its one-padded form with pseudo-inverse and
null-space basis, and the future-output data matrix. On top of it live the
minimum-norm interpolation coefficients, the point predictor, the
least-squares residual matrix, and the certificate deciding whether the
set-valued data-driven predictor collapses to the point predictor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, RankDeficiencyError
from .hankel import HankelSet
from .linalg import DEFAULT_SV_CUTOFF, nullspace_basis, pseudo_inverse, singular_values
from .mlp import MlpNetwork, forward, forward_columns, neural_data_matrix


@dataclass
class DeepcContext:
    """Frozen online-control data; immutable after preparation."""

    net: MlpNetwork
    phi_data: np.ndarray        # (L, T)
    y_future: np.ndarray        # (p*N, T)
    pinv_augmented: np.ndarray  # (T, L+1)
    null_basis: np.ndarray      # (T, k)
    min_singular_value: float
    m: int
    p: int
    t_ini: int
    horizon: int
    sv_cutoff: float = DEFAULT_SV_CUTOFF
    linear_mode: bool = False
    y_future_pinv: np.ndarray | None = None
    y_future_min_sv: float = 0.0

    @property
    def augmented(self) -> np.ndarray:
        return np.vstack([self.phi_data, np.ones((1, self.phi_data.shape[1]))])

    @property
    def feature_dim(self) -> int:
        return self.phi_data.shape[0]

    @property
    def columns(self) -> int:
        return self.phi_data.shape[1]

    @property
    def regressor_dim(self) -> int:
        return (self.m + self.p) * self.t_ini + self.m * self.horizon

    def require_full_row_rank(self):
        svals = singular_values(self.augmented)
        if self.min_singular_value <= self.sv_cutoff * float(svals[0]):
            raise RankDeficiencyError(
                "one-padded feature data matrix is rank deficient "
                f"(min singular value {self.min_singular_value:.3e})"
            )

    def require_output_full_row_rank(self):
        if self.y_future_pinv is None:
            raise RankDeficiencyError(
                "future-output data matrix is rank deficient "
                f"(min singular value {self.y_future_min_sv:.3e})"
            )


def prepare_context(net: MlpNetwork, hankel: HankelSet,
                    sv_cutoff: float = DEFAULT_SV_CUTOFF,
                    linear_mode: bool = False) -> DeepcContext:
    """Compute the feature data matrix and all derived online quantities."""
    h = hankel.regressor
    if net.input_dim != h.shape[0]:
        raise DimensionError(
            f"network input dim {net.input_dim} != regressor rows {h.shape[0]}"
        )
    if net.output_dim != hankel.y_future.shape[0]:
        raise DimensionError(
            f"network output dim {net.output_dim} != future-output rows "
            f"{hankel.y_future.shape[0]}"
        )
    ndm = neural_data_matrix(net, h, sv_cutoff)
    aug = ndm.augmented
    yf = hankel.y_future
    yf_svals = singular_values(yf)
    yf_min = float(yf_svals[-1]) if yf.shape[0] <= yf.shape[1] else 0.0
    yf_full = bool(yf_svals.size and yf_min > sv_cutoff * float(yf_svals[0]))
    return DeepcContext(
        net=net,
        phi_data=ndm.phi,
        y_future=yf,
        pinv_augmented=pseudo_inverse(aug, sv_cutoff),
        null_basis=nullspace_basis(aug, sv_cutoff),
        min_singular_value=ndm.min_singular_value,
        m=hankel.m,
        p=hankel.p,
        t_ini=hankel.t_ini,
        horizon=hankel.horizon,
        sv_cutoff=sv_cutoff,
        linear_mode=linear_mode,
        y_future_pinv=pseudo_inverse(yf, sv_cutoff) if yf_full else None,
        y_future_min_sv=yf_min,
    )


def g_nls(ctx: DeepcContext, phi_k: np.ndarray) -> np.ndarray:
    """Minimum-norm interpolation coefficients for a feature vector."""
    phi_k = np.asarray(phi_k, dtype=float).reshape(-1)
    if phi_k.size != ctx.feature_dim:
        raise DimensionError(f"feature vector has {phi_k.size} entries, expected {ctx.feature_dim}")
    return ctx.pinv_augmented @ np.concatenate([phi_k, [1.0]])


def nls_predict(net: MlpNetwork, u_nn) -> np.ndarray:
    """Point prediction of the (refit) network for one stacked regressor."""
    y, _ = forward(net, u_nn)
    return y


@dataclass
class ResidualMatrix:
    values: np.ndarray  # (p*N, T)
    frobenius: float


def residual_matrix(ctx: DeepcContext, w_out: np.ndarray, b_out: np.ndarray) -> ResidualMatrix:
    """Least-squares residual of the future outputs against [phi_data; 1]."""
    wb = np.hstack([np.atleast_2d(w_out), np.asarray(b_out, dtype=float).reshape(-1, 1)])
    values = ctx.y_future - wb @ ctx.augmented
    return ResidualMatrix(values=values, frobenius=float(np.linalg.norm(values)))


@dataclass
class CertificateReport:
    """Constructive test of predictor equivalence over the data null space."""

    certificate: float
    equivalent: bool
    tolerance: float
    residual_frobenius: float
    min_singular_value: float
    null_dimension: int
    worst_direction: np.ndarray | None = None

    def to_dict(self):
        return {
            "certificate": self.certificate,
            "equivalent": self.equivalent,
            "tolerance": self.tolerance,
            "residual_frobenius": self.residual_frobenius,
            "min_singular_value": self.min_singular_value,
            "null_dimension": self.null_dimension,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def equivalence_certificate(ctx: DeepcContext, residuals: ResidualMatrix,
                            tolerance: float = 1e-6) -> CertificateReport:
    """Max residual action over the null-space basis; zero means the
    set-valued predictor collapses to the point predictor for every input.

    Raises :class:`RankDeficiencyError` when the one-padded feature matrix
    is not full row rank (the hypothesis of the equivalence result).
    """
    ctx.require_full_row_rank()
    basis = ctx.null_basis
    if basis.shape[1] == 0:
        return CertificateReport(
            certificate=0.0, equivalent=True, tolerance=tolerance,
            residual_frobenius=residuals.frobenius,
            min_singular_value=ctx.min_singular_value, null_dimension=0,
        )
    action = residuals.values @ basis  # (p*N, k)
    per_direction = np.max(np.abs(action), axis=0)
    worst = int(np.argmax(per_direction))
    cert = float(per_direction[worst])
    return CertificateReport(
        certificate=cert,
        equivalent=bool(cert < tolerance),
        tolerance=tolerance,
        residual_frobenius=residuals.frobenius,
        min_singular_value=ctx.min_singular_value,
        null_dimension=basis.shape[1],
        worst_direction=basis[:, worst].copy(),
    )
