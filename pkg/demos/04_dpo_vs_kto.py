# %% [markdown]
# # DPO and KTO on pairs that differ in one token
#
# A tabular toy model gives every context its own logit vector. Starting from
# a fit to the chosen sequences, DPO on minimal pairs pushes the chosen
# sequences down along with the rejected ones, while KTO's separate terms
# keep raising the logit of the correct token.

# %%
import numpy as np

from toolcheck.prefopt import (
    KtoConfig,
    failure_mode_demo,
    kto_loss,
    kto_token_gradient,
    toy_pairs,
    fit_chosen,
)

res = failure_mode_demo(n_pairs=200, steps=200, seed=0)
for k, v in res.verdicts.items():
    print(f"{k:36} {v}")

# %% [markdown]
# Trajectories, every 25 steps.

# %%
print(" step  dpo logp(chosen)  kto correct logit")
for s in range(0, len(res.dpo), 25):
    print(f"{s:5d}  {res.dpo.logp_chosen[s]:16.4f}  {res.kto.correct_logit[s]:17.4f}")

# %% [markdown]
# Gradient norm at the start: a pair's shared prefix cancels under DPO.

# %%
print("per-pair norm, one token differs :", round(res.grad_norm_one, 5))
print("per-pair norm, all tokens differ:", round(res.grad_norm_all, 5))

# %% [markdown]
# The per-logit KTO gradient in closed form, at the differing position.

# %%
pairs = toy_pairs(50, seed=1)
model = fit_chosen(pairs, 8, 4)
ref = model.copy()
pair = pairs[0]
i = pair.differing_index
model.logits[(pair.x, pair.y_w[:i])][pair.y_w[i]] += 0.3  # policy already leans toward the chosen token
cfg = KtoConfig(beta=0.5)
_, rep = kto_loss(model, ref, pair, cfg)
g = kto_token_gradient(model, ref, pair, cfg)[(pair.x, pair.y_w[:i])]
np.set_printoptions(precision=4, suppress=True)
print("chosen token", pair.y_w[i], "rejected token", pair.y_l[i], f"a_w-a_l={rep.exact_w - rep.exact_l:.4f}")
print(g)
