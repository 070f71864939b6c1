"""Numerical integration over Gaussian-mixture channel outputs.

The observation model handled here is

    y = sum_k A_k x_k + n,   n ~ CN(0, noise_var * I)

where every ``x_k`` is a vector of i.i.d. symbols that are either drawn
from a finite law or are circular Gaussian.  Gaussian users are folded into
the noise and removed by whitening, leaving a finite Gaussian mixture with
identity covariance.  Mutual information with the discrete users and the
full error covariance of all users are integrated over the noise either by
tensor Gauss-Hermite quadrature or by Monte Carlo.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp


class AccuracyWarning(UserWarning):
    """The integration budget did not pass the internal accuracy check."""


_METHODS = ("gauss-hermite", "monte-carlo")


@dataclass(frozen=True)
class IntegrationEngine:
    """Integration settings.

    Parameters
    ----------
    method : {"gauss-hermite", "monte-carlo"}
    order : int
        Gauss-Hermite points per real noise dimension.
    samples : int
        Monte Carlo noise samples.
    seed : int
        Monte Carlo seed.
    tol : float
        Accuracy target (nats) of the internal check.  Gauss-Hermite results
        are compared with a lower-order rule; Monte Carlo results with three
        standard errors.
    max_nodes : int
        Cap on tensor-product nodes; the per-dimension order is reduced
        (with a warning) when exceeded.
    check : bool
        Run the accuracy check.
    """

    method: str = "gauss-hermite"
    order: int = 64
    samples: int = 100_000
    seed: int = 0
    tol: float = 1e-4
    max_nodes: int = 1 << 16
    check: bool = True

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown integration method {self.method!r}")
        # numpy's Hermite weights overflow beyond roughly 350 points
        if not 2 <= self.order <= 300 or self.samples < 1:
            raise ValueError("order must lie in [2, 300] and samples must be >= 1")

    @property
    def order_or_samples(self) -> int:
        return self.order if self.method == "gauss-hermite" else self.samples


DEFAULT_ENGINE = IntegrationEngine()


@dataclass
class MixtureResult:
    """Output of :func:`analyze_mixture`.

    ``mi`` is I(discrete users; y) in nats with Gaussian users treated as
    noise.  ``error`` is the error covariance of all streams in user order
    (None if not requested).
    """

    mi: float
    error: np.ndarray | None
    stderr: float = 0.0
    warning: str | None = None


def _gh_nodes(order: int, dims: int):
    t, w = np.polynomial.hermite.hermgauss(order)
    w = w / np.sqrt(np.pi)
    pts = np.array(list(itertools.product(t, repeat=dims)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=dims))), axis=1)
    return pts, wts


def _noise_nodes(engine: IntegrationEngine, n_dim: int, real: bool, order=None):
    """Nodes ``w`` (complex, shape (Z, n_dim)) and weights for CN(0, I) noise.

    In real mode only the in-phase part is integrated (variance 1/2 per
    dimension), valid whenever every mixture mean is real.
    """
    note = None
    if engine.method == "monte-carlo":
        rng = np.random.default_rng(engine.seed)
        if real:
            w = np.sqrt(0.5) * rng.standard_normal((engine.samples, n_dim)) + 0j
        else:
            z = rng.standard_normal((engine.samples, n_dim, 2))
            w = np.sqrt(0.5) * (z[..., 0] + 1j * z[..., 1])
        return w, np.full(engine.samples, 1.0 / engine.samples), note
    dims = n_dim if real else 2 * n_dim
    order = engine.order if order is None else order
    if order ** dims > engine.max_nodes:
        reduced = max(2, int(np.floor(engine.max_nodes ** (1.0 / dims))))
        note = f"quadrature order reduced from {order} to {reduced} over {dims} dimensions"
        order = reduced
    pts, wts = _gh_nodes(order, dims)
    w = pts[:, :n_dim] + 0j if real else pts[:, :n_dim] + 1j * pts[:, n_dim:]
    return w, wts, note


def _joint_table(laws, streams):
    """Joint symbol vectors and probabilities of the discrete users."""
    sym_sets, prob_sets = [], []
    for law, n in zip(laws, streams):
        pts, pr = law
        for _ in range(n):
            sym_sets.append(np.asarray(pts, complex))
            prob_sets.append(np.asarray(pr, float))
    if not sym_sets:
        return np.zeros((1, 0), complex), np.ones(1)
    grids = np.meshgrid(*sym_sets, indexing="ij")
    pgrids = np.meshgrid(*prob_sets, indexing="ij")
    S = np.stack([g.ravel() for g in grids], axis=1)
    p = np.prod(np.stack([g.ravel() for g in pgrids], axis=1), axis=1)
    keep = p > 0
    return S[keep], p[keep]


def _merge(mu, p):
    key = np.concatenate([mu.real, mu.imag], axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    n = mu.shape[1]
    merged = uniq[:, :n] + 1j * uniq[:, n:]
    pm = np.zeros(len(uniq))
    np.add.at(pm, inv, p)
    return merged, pm


def _mixture_mi(mu, p, w, wts, chunk):
    """-E[log p(y)/p(y|m)] for the unit-covariance mixture, plus per-node values."""
    logp = np.log(p)
    per_node = np.zeros(len(wts))
    for m in range(len(p)):
        d = mu[m] - mu
        base = logp - np.sum(np.abs(d) ** 2, axis=1)
        for s in range(0, len(wts), chunk):
            cross = 2.0 * np.real(w[s:s + chunk] @ d.conj().T)
            per_node[s:s + chunk] -= p[m] * logsumexp(base[None, :] - cross, axis=1)
    return float(np.dot(wts, per_node)), per_node


def analyze_mixture(columns, laws, noise_var: float, engine: IntegrationEngine = DEFAULT_ENGINE,
                    want_error: bool = True) -> MixtureResult:
    """Mutual information and error covariance for a Gaussian-mixture output.

    Parameters
    ----------
    columns : sequence of ndarray, each (N, n_k)
        Effective gain matrix of each user.
    laws : sequence
        ``None`` for a Gaussian user, else ``(points, probs)`` of the
        per-stream symbol law.
    noise_var : float
        Variance of the circular white noise.
    engine : IntegrationEngine
    want_error : bool
        Also integrate the error covariance.
    """
    columns = [np.atleast_2d(np.asarray(c, complex)) for c in columns]
    n_out = columns[0].shape[0]
    streams = [c.shape[1] for c in columns]
    offsets = np.concatenate([[0], np.cumsum(streams)])
    n_tot = int(offsets[-1])
    disc = [k for k, law in enumerate(laws) if law is not None]
    gauss = [k for k, law in enumerate(laws) if law is None]

    # whitening against thermal noise plus Gaussian users
    R = noise_var * np.eye(n_out, dtype=complex)
    if gauss:
        AG = np.hstack([columns[k] for k in gauss])
        R = R + AG @ AG.conj().T
    evals, evecs = np.linalg.eigh(R)
    W = (evecs / np.sqrt(evals)) @ evecs.conj().T
    AGw = W @ np.hstack([columns[k] for k in gauss]) if gauss else np.zeros((n_out, 0))

    S, p = _joint_table([laws[k] for k in disc], [streams[k] for k in disc])
    B = np.hstack([columns[k] for k in disc]) if disc else np.zeros((n_out, 0))
    mu = (S @ B.T) @ W.T

    # error coordinates: discrete symbols, then Gaussian posterior means
    u = np.hstack([S, -(mu @ AGw.conj())]) if gauss else S
    C = np.eye(AGw.shape[1]) - AGw.conj().T @ AGw
    order_idx = np.concatenate([np.arange(offsets[k], offsets[k + 1]) for k in disc + gauss]
                               ) if n_tot else np.zeros(0, int)

    real = bool(np.all(mu.imag == 0))
    if len(p) == 1:
        err = np.zeros((n_tot, n_tot), complex)
        nd = len(S[0])
        err[nd:, nd:] = C
        return MixtureResult(0.0, _reorder(err, order_idx) if want_error else None)

    w, wts, note = _noise_nodes(engine, n_out, real)
    chunk = max(1, (1 << 20) // len(p))

    mu_m, p_m = _merge(mu, p)
    mi, per_node = _mixture_mi(mu_m, p_m, w, wts, chunk)
    stderr = 0.0
    if engine.method == "monte-carlo":
        stderr = float(np.std(per_node, ddof=1) / np.sqrt(len(wts)))
        if engine.check and 3.0 * stderr > engine.tol:
            note = _join(note, f"Monte Carlo standard error {stderr:.2e} nats exceeds "
                               f"tol {engine.tol:.1e}/3")
    elif engine.check:
        low = max(2, (3 * engine.order) // 4)
        w2, wts2, _ = _noise_nodes(engine, n_out, real, order=low)
        mi_low, _ = _mixture_mi(mu_m, p_m, w2, wts2, chunk)
        if abs(mi - mi_low) > engine.tol:
            note = _join(note, f"quadrature check failed: |I(order {engine.order}) - "
                               f"I(order {low})| = {abs(mi - mi_low):.2e} nats")

    err = None
    if want_error:
        # E[(u_m - u_hat)(u_m - u_hat)^H] = E[u u^H] - E[u_m u_hat^H]; the second
        # integrand is linear in the posterior mean, which integrates more
        # accurately than the squared error
        logp = np.log(p)
        cross = np.zeros((u.shape[1], u.shape[1]), complex)
        for m in range(len(p)):
            d = mu[m] - mu
            base = logp - np.sum(np.abs(d) ** 2, axis=1)
            avg = np.zeros(u.shape[1], complex)
            for s in range(0, len(wts), chunk):
                expo = base[None, :] - 2.0 * np.real(w[s:s + chunk] @ d.conj().T)
                post = np.exp(expo - logsumexp(expo, axis=1, keepdims=True))
                avg += wts[s:s + chunk] @ (post @ u)
            cross += p[m] * np.outer(u[m], avg.conj())
        err = (u.T * p) @ u.conj() - 0.5 * (cross + cross.conj().T)
        nd = S.shape[1]
        err[nd:, nd:] += C
        err = _reorder(err, order_idx)

    if note is not None:
        warnings.warn(note, AccuracyWarning, stacklevel=2)
    return MixtureResult(max(mi, 0.0), err, stderr, note)


def _join(a, b):
    return b if a is None else f"{a}; {b}"


def _reorder(err, order_idx):
    out = np.empty_like(err)
    out[np.ix_(order_idx, order_idx)] = err
    return out


def posterior_mean_mixture(y, columns, laws, noise_var: float) -> np.ndarray:
    """Conditional mean of every stream given one observation ``y``."""
    columns = [np.atleast_2d(np.asarray(c, complex)) for c in columns]
    y = np.atleast_1d(np.asarray(y, complex))
    n_out = columns[0].shape[0]
    streams = [c.shape[1] for c in columns]
    offsets = np.concatenate([[0], np.cumsum(streams)])
    disc = [k for k, law in enumerate(laws) if law is not None]
    gauss = [k for k, law in enumerate(laws) if law is None]
    R = noise_var * np.eye(n_out, dtype=complex)
    if gauss:
        AG = np.hstack([columns[k] for k in gauss])
        R = R + AG @ AG.conj().T
    evals, evecs = np.linalg.eigh(R)
    W = (evecs / np.sqrt(evals)) @ evecs.conj().T
    AGw = W @ np.hstack([columns[k] for k in gauss]) if gauss else np.zeros((n_out, 0))
    S, p = _joint_table([laws[k] for k in disc], [streams[k] for k in disc])
    B = np.hstack([columns[k] for k in disc]) if disc else np.zeros((n_out, 0))
    mu = (S @ B.T) @ W.T
    yw = W @ y
    logw = np.log(p) - np.sum(np.abs(yw[None, :] - mu) ** 2, axis=1)
    post = np.exp(logw - logsumexp(logw))
    est_d = post @ S
    est_g = AGw.conj().T @ (yw - post @ mu)
    out = np.zeros(int(offsets[-1]), complex)
    idx_d = np.concatenate([np.arange(offsets[k], offsets[k + 1]) for k in disc]) if disc else []
    idx_g = np.concatenate([np.arange(offsets[k], offsets[k + 1]) for k in gauss]) if gauss else []
    out[np.asarray(idx_d, int)] = est_d
    out[np.asarray(idx_g, int)] = est_g
    return out
