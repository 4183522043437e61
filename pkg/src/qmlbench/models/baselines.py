"""Classical baselines behind the shared classifier contract."""

from __future__ import annotations

from ..classical import mlp_fit, svm_decision, svm_fit
from .base import Classifier


class MLPClassifier(Classifier):
    """ReLU multilayer perceptron with an L2 penalty, trained by Adam."""

    kind = "MLPClassifier"
    defaults = {"learning_rate": 0.001, "hidden_layer_sizes": (100,), "alpha": 0.0001}
    preprocessing = None
    max_epochs = 3000

    def _fit(self, X, y):
        self.model_ = mlp_fit(X, y, hidden_layer_sizes=tuple(self.hidden_layer_sizes),
                              learning_rate=self.learning_rate, alpha=self.alpha,
                              max_epochs=self.max_epochs, rng=self.rng_)
        self.loss_history_ = self.model_.loss_history
        self.converged_ = self.model_.converged

    def _decision(self, X):
        return self.model_.logits(X)


class SVC(Classifier):
    """Support vector machine with the Gaussian kernel ``exp(-gamma ||x - x'||^2)``."""

    kind = "SVC"
    defaults = {"C": 1.0, "gamma": 0.1}
    preprocessing = None

    def _fit(self, X, y):
        self.model_ = svm_fit(X, y, C=self.C, kernel="rbf", gamma=self.gamma)
        self.converged_ = self.model_.converged

    def _decision(self, X):
        return svm_decision(self.model_, X)
