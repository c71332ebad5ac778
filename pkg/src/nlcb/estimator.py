"""Estimator-style wrapper around the reduction pipeline."""

from __future__ import annotations

import time

import numpy as np
import scipy.linalg as la
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .fe import Model
from .partition import partition_model
from .rom import build_rom, classic_cb


class NLCBReducer(TransformerMixin, BaseEstimator):
    """Build a reduced model of a finite-element ``Model``.

    ``fit`` takes the model itself in place of a data matrix. After
    fitting, ``transform`` maps displacement snapshots (rows over the
    model free DoFs) to reduced coordinates by a mass-weighted least
    squares fit of the linear map, and ``inverse_transform`` evaluates
    the manifold.

    Parameters
    ----------
    cuts : sequence of float
        Abscissae of the interface nodes; the nearest node is used.
    n_phi : int or sequence of int
        Fixed-interface modes kept per substructure.
    interface : {"virtual_node", "identity"}
        Interface reduction.
    method : {"exact", "fd"}
        Evaluation of the second-order right-hand sides.
    ablation : {"none", "quadratic", "quadratic-chi", "quadratic-cross"}
        Part of the quadratic manifold to zero.
    classic : bool
        Build the linear classic Craig-Bampton model instead.

    Attributes
    ----------
    rom_ : ReducedModel
    partition_ : Partition
    manifolds_ : list of Manifold
    build_time_ : float
        Wall-clock seconds spent in ``fit``.
    """

    def __init__(self, cuts=(0.6,), n_phi=1, interface="virtual_node", method="exact", ablation="none", classic=False):
        self.cuts = cuts
        self.n_phi = n_phi
        self.interface = interface
        self.method = method
        self.ablation = ablation
        self.classic = classic

    def fit(self, X: Model, y=None):
        if not isinstance(X, Model):
            raise TypeError(f"fit expects a Model, got {type(X).__name__}")
        start = time.perf_counter()
        nodes = [X.node_at(c) for c in self.cuts]
        self.partition_ = partition_model(X, nodes)
        if self.classic:
            self.rom_ = classic_cb(self.partition_, self.n_phi, self.interface)
            self.manifolds_ = []
        else:
            self.rom_, self.manifolds_, _ = build_rom(
                self.partition_, self.n_phi, self.interface, method=self.method, ablation=self.ablation
            )
        M = X.kernel.mass()
        V = self.rom_.load_map
        self._gram = la.cho_factor(V.T @ (M @ V))
        self._MV = np.asarray(M @ V)
        self.n_features_in_ = X.n_dofs
        self.build_time_ = time.perf_counter() - start
        return self

    def transform(self, X):
        check_is_fitted(self, "rom_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} DoFs per row, got {X.shape[1]}")
        return la.cho_solve(self._gram, self._MV.T @ X.T).T

    def inverse_transform(self, X):
        check_is_fitted(self, "rom_")
        return self.rom_.reconstruct(np.atleast_2d(np.asarray(X, dtype=float)))
