"""Diagnostics for the contraction analysis of the horizon updates.

In the matched noiseless setting (plant = model with unknown true
weights theta_o), each update contracts the squared weight error

    eps_k = ||theta_o - theta_k||^2

by at least rho_c = 2*mu / (mu/2 + delta), provided mu < (2/3)*delta,
where delta lower-bounds the identifiability ratio

    ||Gamma(theta_o, theta)||^2 / ||theta_o - theta||^2

of windowed output-error energy to weight-error energy.  delta is not
computable globally; this module delivers a sampled surrogate (minimum
of the ratio over drawn perturbations and windows, optionally refined
by gradient descent on the ratio) and scopes all verdicts to that
sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .models import ModelSpec, ParamVector


def output_error_stack(spec: ModelSpec, theta_true: ParamVector,
                       theta_cand: ParamVector, window) -> np.ndarray:
    """Stacked output differences of the two rollouts from the same x_init."""
    y_true, _ = models.simulate(spec, theta_true, window.x_init, window.inputs)
    y_cand, _ = models.simulate(spec, theta_cand, window.x_init, window.inputs)
    return (y_true - y_cand).ravel()


def epsilon(theta_true: ParamVector, theta: ParamVector) -> float:
    """Squared weight error over trainable coordinates."""
    if theta_true.spec != theta.spec:
        raise ValueError("parameter vectors belong to different specs")
    mask = models.trainable_mask(theta_true.spec)
    dv = (theta_true.values - theta.values)[mask]
    return float(dv @ dv)


@dataclass(frozen=True)
class DeltaSamplerConfig:
    n_samples: int = 200
    radius: float = 1.0          # perturbation norm upper bound
    seed: int = 0
    refine_steps: int = 0        # gradient-descent steps on the ratio per sample
    refine_from: int = 8         # how many of the best samples to refine
    probe_smallest: int = 0      # least-identifiable directions per window to probe

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class DeltaEstimate:
    delta_hat: float
    n_samples: int
    config: DeltaSamplerConfig
    argmin_window: int           # index of the window attaining the minimum
    argmin_perturbation: np.ndarray


def _ratio_and_grad(spec, theta_true, window, d, mask):
    """ratio = ||Gamma||^2/||d||^2 and its gradient w.r.t. d (trainable)."""
    vals = theta_true.values.copy()
    vals[mask] += d
    cand = theta_true.replace_values(vals)
    targets, _ = models.simulate(spec, theta_true, window.x_init, window.inputs)
    fit, grad = models.window_loss_and_gradient(
        spec, cand, window.x_init, window.inputs, targets)
    nd2 = float(d @ d)
    ratio = fit / nd2
    g = grad[mask] / nd2 - 2.0 * fit * d / nd2 ** 2
    return ratio, g


def estimate_delta(spec: ModelSpec, theta_true: ParamVector, windows,
                   config: DeltaSamplerConfig,
                   extra_perturbations=None) -> DeltaEstimate:
    """Sampled lower-bound surrogate for the identifiability constant.

    Draws random weight perturbations within the radius, evaluates the
    output-error/weight-error ratio on every window, and reports the
    minimum.  Optional refinement descends the ratio from the best draws
    (every refinement iterate counts as a sample).  Deterministic per
    seed.
    """
    if not windows:
        raise ValueError("need at least one window")
    mask = models.trainable_mask(spec)
    n = int(mask.sum())
    rng = np.random.default_rng(config.seed)
    perturbations = []
    for _ in range(config.n_samples):
        d = rng.normal(size=n)
        d *= rng.uniform(0.1, 1.0) * config.radius / np.linalg.norm(d)
        perturbations.append(d)
    if extra_perturbations is not None:
        for d in extra_perturbations:
            d = np.asarray(d, dtype=float)
            if np.linalg.norm(d) > 0:
                perturbations.append(d)
    if config.probe_smallest > 0:
        # Random draws concentrate near the bulk of the sensitivity spectrum
        # and can miss sloppy (weakly identifiable) directions by many orders
        # of magnitude.  Propose the least-sensitive right singular vectors of
        # each window's output Jacobian as additional candidates; they are
        # evaluated through the exact nonlinear ratio like any other sample.
        for w in windows:
            _, J = models.output_jacobian(spec, theta_true, w.x_init, w.inputs)
            _, _, Vt = np.linalg.svd(J, full_matrices=False)
            for v in Vt[-config.probe_smallest:]:
                # the ratio infimum is approached at small norms, so probe
                # down to a small fraction of the radius as well
                for frac in (1e-3, 1e-2, 0.1, 0.3, 1.0):
                    perturbations.append(frac * config.radius * v)

    targets_cache = [models.simulate(spec, theta_true, w.x_init, w.inputs)[0]
                     for w in windows]

    def ratio_of(d, wi):
        vals = theta_true.values.copy()
        vals[mask] += d
        cand = theta_true.replace_values(vals)
        pred, _ = models.simulate(spec, cand, windows[wi].x_init, windows[wi].inputs)
        diff = (targets_cache[wi] - pred).ravel()
        return float(diff @ diff) / float(d @ d)

    records = []   # (ratio, window index, perturbation)
    for d in perturbations:
        for wi in range(len(windows)):
            records.append((ratio_of(d, wi), wi, d))
    n_evaluated = len(records)
    records.sort(key=lambda r: r[0])

    if config.refine_steps > 0:
        seen = []
        for ratio0, wi, d0 in records[:config.refine_from]:
            d = d0.copy()
            lr = 0.5 * np.linalg.norm(d) ** 2 / max(ratio0 * np.linalg.norm(d), 1e-30)
            cur = ratio0
            for _ in range(config.refine_steps):
                r, g = _ratio_and_grad(spec, theta_true, windows[wi], d, mask)
                step = lr * g
                d_new = d - step
                # keep the perturbation inside the sampling ball
                nrm = np.linalg.norm(d_new)
                if nrm > config.radius:
                    d_new *= config.radius / nrm
                if nrm < 1e-12:
                    break
                r_new = ratio_of(d_new, wi)
                n_evaluated += 1
                if r_new < cur:
                    d, cur = d_new, r_new
                    lr *= 1.2
                else:
                    lr *= 0.5
            seen.append((cur, wi, d))
        records = sorted(records + seen, key=lambda r: r[0])

    best_ratio, best_wi, best_d = records[0]
    return DeltaEstimate(delta_hat=best_ratio, n_samples=n_evaluated,
                         config=config, argmin_window=best_wi,
                         argmin_perturbation=best_d)


def contraction_coefficient(mu: float, delta: float):
    """(rho_c, satisfied): rho_c = 2mu/(mu/2 + delta), satisfied iff < 1."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    rho = 2.0 * mu / (0.5 * mu + delta)
    return rho, rho < 1.0


@dataclass
class ConvergenceReport:
    ks: list
    epsilons: list
    ratios: list                 # eps_k / eps_{k-N}, nan where undefined
    rho_c: float
    violations: list             # checkpoint indices exceeding rho_c * (1 + tol)
    tol: float

    @property
    def converged(self):
        return len(self.epsilons) > 1 and self.epsilons[-1] < self.epsilons[0]

    def to_rows(self):
        rows = []
        for i, (k, e, r) in enumerate(zip(self.ks, self.epsilons, self.ratios)):
            rows.append({"k": k, "epsilon": e, "ratio": r, "rho_c": self.rho_c,
                         "violated": i in self.violations})
        return rows


def track_error(checkpoints, theta_true: ParamVector, delta_hat: float,
                mu: float, tol: float = 0.01) -> ConvergenceReport:
    """Per-update weight-error trajectory vs the theoretical contraction."""
    rho_c, _ = contraction_coefficient(mu, delta_hat)
    ks, eps, ratios, violations = [], [], [], []
    prev = None
    for i, c in enumerate(checkpoints):
        e = epsilon(theta_true, c.solution)
        if i == 0:
            prev = epsilon(theta_true, c.prior)
        ks.append(c.k)
        eps.append(e)
        if prev is not None and prev > 0:
            r = e / prev
            ratios.append(r)
            if e > rho_c * prev * (1.0 + tol):
                violations.append(i)
        else:
            ratios.append(float("nan"))
        prev = e
    return ConvergenceReport(ks=ks, epsilons=eps, ratios=ratios, rho_c=rho_c,
                             violations=violations, tol=tol)
