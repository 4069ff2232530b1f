# %% [markdown]
# # Building a preference dataset from single injected errors
#
# Every gold answer becomes a (chosen, rejected) pair: the rejected side is
# the gold answer with one error of a sampled class injected, and the
# checker confirms that class fires before the pair is kept.

# %%
from collections import Counter

from toolcheck.callparse import parse_lenient
from toolcheck.checker import CheckMode, ErrorCode, check
from toolcheck.negsample import PerturbPolicy, build_ptc, perturb
from toolcheck.synthetic import synth_cases

cases = synth_cases(300, seed=0)
case = cases[0]
print(case.query)

# %% [markdown]
# One case, every error class.

# %%
for code in ErrorCode:
    print(f"--- {code.name} {code.title}")
    print(perturb(case.gold, case.tools, code, seed=0))

# %% [markdown]
# The whole corpus under a skewed policy. The plan records which code each
# case got, so a rerun with the same seed reproduces the file exactly.

# %%
policy = PerturbPolicy(weights={ErrorCode.E4: 3.0, ErrorCode.E7: 0.5}, seed=11)
built = build_ptc(cases, policy)
print(len(built.pairs), "pairs,", len(built.skipped), "skipped")
print(sorted((c.name, n) for c, n in built.plan_counts().items()))

# %% [markdown]
# Sanity: the checker agrees with every label.

# %%
by_id = {c.id: c for c in cases}
agree = Counter()
for pair in built.pairs:
    c = by_id[pair.id]
    found = {f.code for f in check(parse_lenient(pair.rejected), c.registry, c.gold, CheckMode.REFERENCED)}
    agree[pair.injected_error in found] += 1
print(agree)
