"""Binary log-loss objective on the log-odds scale."""
import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logistic_grad_hess(label, pred_logodds):
    """First and second derivative of the per-sample log loss w.r.t. the logit."""
    p = sigmoid(pred_logodds)
    g = p - np.asarray(label, dtype=np.float64)
    h = p * (1.0 - p)
    if np.ndim(g) == 0:
        return float(g), float(h)
    return g, h


def prior_logodds(labels) -> float:
    p = float(np.mean(labels))
    return float(np.log(p / (1.0 - p)))
