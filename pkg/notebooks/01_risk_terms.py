# %% [markdown]
# # Ranking risk on a toy batch
# Two users, four items. We look at each per-user term of the
# self-normalised uLSIF risk and how the two corrections change it.

# %%
import numpy as np

from dregn.risk import BatchLossInput, RiskConfig, bregman_div, ranking_ulsif_loss, ULSIF
from dregn.weighting import hard_sample_weights, uniform_weights

scores = np.array([[2.0, 0.5, 1.0, 0.2],
                   [0.3, 1.5, 0.8, 1.1]])
pos = np.array([[1, 0, 1, 0],
                [0, 1, 0, 0]], bool)
priors = pos.sum(1) / pos.shape[1]
s = np.array([0.9, 0.6, 0.8, 0.5])  # item inclusion probabilities

# %%
bregman_div(ULSIF, 3.0, 1.0)  # (3 - 1)^2 / 2

# %%
for name, w in [("uniform", uniform_weights(scores.shape)), ("hard", hard_sample_weights(scores))]:
    for is_corr, nn in [(False, False), (True, False), (True, True)]:
        cfg = RiskConfig(is_correction=is_corr, nn_correction=nn, d_bar=2.0)
        loss, terms = ranking_ulsif_loss(BatchLossInput(scores, pos, priors, *w, s), cfg)
        print(f"{name:8} IS={is_corr!s:5} NN={nn!s:5} loss={loss:+.4f}",
              "per-user", np.round(terms["per_user"], 4))

# %% [markdown]
# Weight scale cancels user by user.

# %%
w = hard_sample_weights(scores)
a, _ = ranking_ulsif_loss(BatchLossInput(scores, pos, priors, *w, s), RiskConfig())
b, _ = ranking_ulsif_loss(BatchLossInput(scores, pos, priors, 5 * w.weights_pos,
                                         [[0.1], [30.0]] * w.weights_neg, s), RiskConfig())
print(a, b, abs(a - b))
