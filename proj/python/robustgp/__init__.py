"""Gaussian process regression with bias terms for outliers.

    >>> import robustgp
    >>> d = robustgp.simulate(seed=1)
    >>> m = robustgp.fit(d["X_train"], d["y_train"], model="cob")
    >>> mean, latent_var, obs_var = m.predict(d["X_test"])
"""

from ._robustgp import (
    DataError,
    Model,
    NumericalError,
    fit,
    gauss_nll,
    kernel_matrix,
    mse,
    nlpd,
    simulate,
)

__all__ = [
    "DataError",
    "Model",
    "NumericalError",
    "fit",
    "gauss_nll",
    "kernel_matrix",
    "mse",
    "nlpd",
    "simulate",
]
