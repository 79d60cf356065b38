"""Semi-supervised partial-membership unmixing.

Superpixels act as documents: each superpixel d carries a mixing vector
pi_d ~ Dirichlet(alpha), each pixel i in d a membership simplex vector
z_i ~ Dirichlet(lambda * pi_d), and the observed spectrum is Gaussian with
mean sum_k z_ik * mu_k and diagonal variance sum_k z_ik * sigma2_k.
Class-tagged superpixels are constrained: the proportion mass outside the
allowed endmember set stays below epsilon in every retained sample.

Inference is Metropolis-within-Gibbs with Dirichlet random-walk proposals
(step concentration auto-tuned to a 20-40% acceptance rate during burn-in)
and per-iteration weighted maximum-likelihood endmember refits. Returned
proportions are the posterior mean over post-burn-in samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gammaln

from .errors import InputError
from .finalseg import lloyd
from .hsio import HsiCube
from .hslic import LabelMap

_ZCLIP = 1e-12    # simplex floor for memberships
_PCLIP = 1e-8     # simplex floor for mixing vectors


@dataclass
class Endmember:
    mu: np.ndarray        # (B,) mean spectrum
    sigma2: np.ndarray    # (B,) per-band variance
    tag: str | None = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma2 = np.asarray(self.sigma2, dtype=np.float64)
        if not (np.isfinite(self.sigma2).all() and (self.sigma2 > 0).all()):
            raise InputError("endmember variances must be finite and > 0")


@dataclass
class ProportionMap:
    """Per-pixel simplex vector over the endmembers."""

    data: np.ndarray      # (height, width, M)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise InputError(f"proportion map must be 3-D, got {self.data.shape}")
        if (self.data < 0).any():
            raise InputError("proportions must be non-negative")
        sums = self.data.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise InputError("proportion vectors must sum to 1 within 1e-6")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def M(self) -> int:
        return self.data.shape[2]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1, self.M)


@dataclass
class PartialLabelSet:
    """Superpixel label -> allowed endmember index set."""

    allowed: dict = field(default_factory=dict)

    def validate(self, M: int, n_superpixels: int):
        for sp, idxs in self.allowed.items():
            if not 0 <= sp < n_superpixels:
                raise InputError(f"partial label references unknown superpixel {sp}")
            if not idxs:
                raise InputError(f"superpixel {sp}: allowed endmember set is empty")
            if any(not 0 <= k < M for k in idxs):
                raise InputError(f"superpixel {sp}: endmember index out of range")
        return self

    def __len__(self):
        return len(self.allowed)


@dataclass
class SamplerParams:
    M: int
    alpha: float = 0.3
    lambda_pm: float = 1.0
    epsilon: float = 0.05
    T: int = 200
    seed: int = 0
    burn_in: int | None = None   # defaults to T // 2

    def validate(self):
        if self.M < 1:
            raise InputError("M must be >= 1")
        if self.alpha <= 0 or self.lambda_pm <= 0:
            raise InputError("alpha and lambda_pm must be > 0")
        if not 0.0 <= self.epsilon <= 1.0:
            raise InputError("epsilon must lie in [0, 1]")
        if self.T < 1:
            raise InputError("T must be >= 1")
        burn = self.T // 2 if self.burn_in is None else self.burn_in
        if not 0 <= burn < self.T:
            raise InputError("burn_in must satisfy 0 <= burn_in < T")
        return self

    @property
    def effective_burn_in(self) -> int:
        return self.T // 2 if self.burn_in is None else self.burn_in


def _variance_floor(X: np.ndarray) -> np.ndarray:
    """Per-band floor: 1e-6 of the global variance, never below 1e-12."""
    return np.maximum(X.var(axis=0) * 1e-6, 1e-12)


def init_endmembers(cube: HsiCube, M: int, seed: int = 0) -> list[Endmember]:
    """Seed endmembers by k-means++ plus a short hard-assignment refinement."""
    X = cube.spectra()
    distinct = np.unique(X, axis=0).shape[0]
    if M > distinct:
        raise InputError(f"M={M} exceeds the {distinct} distinct spectra in the cube")
    result = lloyd(X, M, np.random.default_rng(seed), max_iters=10)
    floor = _variance_floor(X)
    out = []
    for k in range(M):
        members = X[result.assignments == k]
        var = members.var(axis=0) if len(members) else np.zeros(X.shape[1])
        out.append(Endmember(result.centroids[k].copy(), np.maximum(var, floor)))
    return out


def _project_rows(V: np.ndarray, off_mask: np.ndarray, eps: float) -> np.ndarray:
    """Cap each row's mass on off_mask at eps, moving the excess into the
    allowed entries proportionally (uniformly when they hold no mass)."""
    V = V.copy()
    off = V[:, off_mask].sum(axis=1)
    over = off > eps
    if not over.any():
        return V
    rows = np.nonzero(over)[0]
    scale = eps / off[rows] if eps > 0 else np.zeros(rows.size)
    V[np.ix_(rows, np.nonzero(off_mask)[0])] *= scale[:, None]
    excess = off[rows] - eps
    allowed_idx = np.nonzero(~off_mask)[0]
    in_mass = V[np.ix_(rows, allowed_idx)].sum(axis=1)
    for j, row in enumerate(rows):
        if in_mass[j] > 0:
            V[row, allowed_idx] *= 1.0 + excess[j] / in_mass[j]
        else:
            V[row, allowed_idx] = excess[j] / allowed_idx.size
    return V


def _log_dirichlet(V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Rowwise log Dirichlet density of simplex rows V under parameter rows A."""
    A = np.maximum(A, 1e-12)  # keeps the density total at hard-zero parameters
    logv = np.log(np.clip(V, 1e-300, None))
    return gammaln(A.sum(axis=1)) - gammaln(A).sum(axis=1) + ((A - 1.0) * logv).sum(axis=1)


def _gauss_loglik(X: np.ndarray, Z: np.ndarray, mu: np.ndarray,
                  sig2: np.ndarray) -> np.ndarray:
    """Per-pixel log density of X under the membership-mixed diagonal Gaussian."""
    mean = Z @ mu
    var = Z @ sig2
    return -0.5 * (np.log(2.0 * np.pi * var) + (X - mean) ** 2 / var).sum(axis=1)


def _joint_loglik(X, doc, Z, Pi, mu, sig2, alpha, lam) -> float:
    M = Z.shape[1]
    ll = _gauss_loglik(X, Z, mu, sig2).sum()
    ll += _log_dirichlet(Pi, np.full((Pi.shape[0], M), alpha)).sum()
    ll += _log_dirichlet(Z, lam * Pi[doc]).sum()
    return float(ll)


def _normalize_rows(V: np.ndarray, clip: float) -> np.ndarray:
    V = np.clip(V, clip, None)
    return V / V.sum(axis=1, keepdims=True)


class _StepTuner:
    """Adjust a Dirichlet proposal concentration toward 20-40% acceptance."""

    def __init__(self, s: float = 50.0, every: int = 10):
        self.s = s
        self.every = every
        self.accepted = 0
        self.proposed = 0

    def record(self, accepted: int, proposed: int, iteration: int, burn_in: int):
        self.accepted += accepted
        self.proposed += proposed
        if iteration >= burn_in or (iteration + 1) % self.every or not self.proposed:
            return
        rate = self.accepted / self.proposed
        if rate < 0.2:
            self.s = min(self.s * 2.0, 1e7)    # tighter proposals
        elif rate > 0.4:
            self.s = max(self.s * 0.6, 2.0)    # bolder proposals
        self.accepted = self.proposed = 0


def run_spmlda(cube: HsiCube, superpixels: LabelMap, labels: PartialLabelSet | None,
               params: SamplerParams, callback=None):
    """Sample memberships and endmembers; returns (ProportionMap, endmembers).

    `callback(iteration, joint_log_likelihood)` is invoked once per iteration
    when given, which is how convergence is usually monitored.
    """
    params.validate()
    superpixels.validate()
    if (superpixels.height, superpixels.width) != (cube.height, cube.width):
        raise InputError("superpixel map does not match the cube dimensions")
    M, lam, alpha = params.M, params.lambda_pm, params.alpha
    X = cube.spectra()
    doc = superpixels.labels.ravel().astype(np.int64)
    D = superpixels.n_labels
    labels = labels or PartialLabelSet({})
    labels.validate(M, D)

    rng = np.random.default_rng(params.seed)
    ems = init_endmembers(cube, M, params.seed)
    mu = np.stack([e.mu for e in ems])          # (M, B)
    sig2 = np.stack([e.sigma2 for e in ems])    # (M, B)
    floor = _variance_floor(X)

    # membership init: hard assignment to the nearest endmember, slightly smoothed
    d2 = cdist(X, mu, "sqeuclidean")
    Z = np.full((X.shape[0], M), 0.02 / M)
    Z[np.arange(X.shape[0]), d2.argmin(axis=1)] += 0.98
    Pi = np.zeros((D, M))
    np.add.at(Pi, doc, Z)
    Pi = _normalize_rows(Pi, _PCLIP)

    # per-document off-set masks for the labeled superpixels
    off_masks = {}
    labeled_pixel_rows = {}
    for sp, idxs in labels.allowed.items():
        mask = np.ones(M, dtype=bool)
        mask[sorted(idxs)] = False
        if mask.any():
            off_masks[sp] = mask
            labeled_pixel_rows[sp] = np.nonzero(doc == sp)[0]

    def _constrain_z(Zmat):
        for sp, mask in off_masks.items():
            rows = labeled_pixel_rows[sp]
            Zmat[rows] = _project_rows(Zmat[rows], mask, params.epsilon)
        return Zmat

    def _constrain_pi(Pmat):
        for sp, mask in off_masks.items():
            Pmat[sp:sp + 1] = _project_rows(Pmat[sp:sp + 1], mask, params.epsilon)
        return Pmat

    # projection last so the epsilon bound holds exactly on retained samples
    Z = _constrain_z(_normalize_rows(Z, _ZCLIP))
    Pi = _constrain_pi(_normalize_rows(Pi, _PCLIP))

    burn_in = params.effective_burn_in
    z_tuner, pi_tuner = _StepTuner(), _StepTuner()
    z_sum = np.zeros_like(Z)
    kept = 0
    refloored = False

    for t in range(params.T):
        # --- membership update, all pixels at once
        prop = rng.gamma(z_tuner.s * Z + 0.1)
        prop = _constrain_z(_normalize_rows(prop, _ZCLIP))
        a_doc = lam * Pi[doc]
        cur_target = _gauss_loglik(X, Z, mu, sig2) + _log_dirichlet(Z, a_doc)
        new_target = _gauss_loglik(X, prop, mu, sig2) + _log_dirichlet(prop, a_doc)
        log_fwd = _log_dirichlet(prop, z_tuner.s * Z + 0.1)
        log_rev = _log_dirichlet(Z, z_tuner.s * prop + 0.1)
        accept = np.log(rng.random(Z.shape[0])) < (new_target - cur_target + log_rev - log_fwd)
        Z[accept] = prop[accept]
        z_tuner.record(int(accept.sum()), accept.size, t, burn_in)

        # --- mixing-vector update, all superpixels at once
        logz = np.log(np.clip(Z, 1e-300, None))
        S = np.zeros((D, M))
        np.add.at(S, doc, logz)
        n_d = np.bincount(doc, minlength=D).astype(np.float64)
        prop = rng.gamma(pi_tuner.s * Pi + 0.1)
        prop = _constrain_pi(_normalize_rows(prop, _PCLIP))

        def pi_target(P):
            prior = _log_dirichlet(P, np.full((D, M), alpha))
            memb = n_d * (gammaln(lam) - gammaln(np.maximum(lam * P, 1e-12)).sum(axis=1)) \
                + ((lam * P - 1.0) * S).sum(axis=1)
            return prior + memb

        cur_target = pi_target(Pi)
        new_target = pi_target(prop)
        log_fwd = _log_dirichlet(prop, pi_tuner.s * Pi + 0.1)
        log_rev = _log_dirichlet(Pi, pi_tuner.s * prop + 0.1)
        accept = np.log(rng.random(D)) < (new_target - cur_target + log_rev - log_fwd)
        Pi[accept] = prop[accept]
        pi_tuner.record(int(accept.sum()), accept.size, t, burn_in)

        # --- endmember refit given the current memberships
        mu = np.linalg.lstsq(Z, X, rcond=None)[0]
        resid2 = (X - Z @ mu) ** 2
        weight = Z.sum(axis=0)
        good = weight > 1e-8
        new_sig2 = sig2.copy()
        new_sig2[good] = (Z.T @ resid2)[good] / weight[good, None]
        if (new_sig2 < floor).any():
            if not refloored:
                warnings.warn("degenerate endmember covariance floored", RuntimeWarning)
                refloored = True
            new_sig2 = np.maximum(new_sig2, floor)
        sig2 = new_sig2

        if callback is not None:
            callback(t, _joint_loglik(X, doc, Z, Pi, mu, sig2, alpha, lam))
        if t >= burn_in:
            z_sum += Z
            kept += 1

    proportions = ProportionMap((z_sum / kept).reshape(cube.height, cube.width, M))
    endmembers = [Endmember(mu[k].copy(), sig2[k].copy()) for k in range(M)]
    return proportions, endmembers


def log_likelihood(cube: HsiCube, superpixels: LabelMap, proportions: ProportionMap,
                   endmembers: list, params: SamplerParams) -> float:
    """Joint log density of the model at the given state.

    The per-superpixel mixing vectors are not part of the serialized state;
    they are reconstructed as the member-mean proportion of each superpixel.
    """
    params.validate()
    X = cube.spectra()
    doc = superpixels.labels.ravel().astype(np.int64)
    D = superpixels.n_labels
    Z = _normalize_rows(proportions.flat(), _ZCLIP)
    if Z.shape[1] != params.M or len(endmembers) != params.M:
        raise InputError("proportion width and endmember count must equal M")
    Pi = np.zeros((D, params.M))
    np.add.at(Pi, doc, Z)
    Pi = _normalize_rows(Pi, _PCLIP)
    mu = np.stack([e.mu for e in endmembers])
    sig2 = np.stack([e.sigma2 for e in endmembers])
    return _joint_loglik(X, doc, Z, Pi, mu, sig2, params.alpha, params.lambda_pm)
