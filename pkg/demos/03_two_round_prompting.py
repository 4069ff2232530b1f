# %% [markdown]
# # Two-round checklist prompting with a scripted model
#
# Round one sends the tools plus the global checklist. Round two replays the
# conversation, lists what the checker found in the first answer and adds a
# local checklist for each tool the answer used. A scripted client stands in
# for a real endpoint so the run is reproducible.

# %%
from toolcheck.callparse import render_calls
from toolcheck.chat import Completion, ScriptedClient, Usage, estimate_tokens
from toolcheck.icl import IclOptions, report, run_many
from toolcheck.localgen import synth_checklist_offline
from toolcheck.negsample import perturb
from toolcheck.checker import ErrorCode
from toolcheck.synthetic import synth_cases

cases = synth_cases(8, seed=3)
checklists = {t.name: synth_checklist_offline(t, 0) for c in cases for t in c.tools}

# %% [markdown]
# The fake model makes a parameter mistake first and fixes it when asked.

# %%
def fake_model(messages, case_id, round):
    case = next(c for c in cases if c.id == case_id)
    if round == 1:
        text = perturb(case.gold, case.tools, ErrorCode.E2, seed=1)
    else:
        text = render_calls(case.gold)
    prompt = sum(estimate_tokens(m.content) for m in messages)
    return Completion(text, Usage(prompt, estimate_tokens(text)))


for variant in ("vanilla", "no_local", "two_round"):
    opts = IclOptions(variant, checklists=checklists)
    recs = run_many(cases, ScriptedClient(fake_model), opts, concurrency=4)
    rep = report(recs, cases)
    print(f"{variant:10} F1 name+param={rep['scores']['f1_name_param']:.3f} "
          f"prompt tokens/case={rep['cost']['prompt_tokens_per_case']:.0f}")

# %% [markdown]
# What the second-round request looks like for the first case.

# %%
print(recs[0].round2_messages[-1].content[:1500])
