# %% [markdown]
# # Checking tool calls
#
# A model answer is parsed leniently, then compared with the tool schemas
# (and optionally a gold answer). Each problem comes back as a finding with
# an error code, a message and a hint on how to fix it.

# %%
from toolcheck.callparse import parse_lenient
from toolcheck.checker import CheckMode, check, render_global_checklist
from toolcheck.toolspec import parse_tool_spec, registry_from_specs

tools = [
    parse_tool_spec({
        "name": "find_n_largest_numbers",
        "description": "Finds the n largest numbers in a list.",
        "parameters": {
            "nums": {"type": "List[int]", "description": "The list of numbers."},
            "n": {"type": "int", "description": "How many to return."},
        },
    }),
    parse_tool_spec({
        "name": "polygon_area_shoelace",
        "description": "Area of a polygon from its vertices.",
        "parameters": {"vertices": {"type": "List[Tuple[float, float]]", "description": "Vertices (x, y)."}},
    }),
]
registry = registry_from_specs(tools)

# %% [markdown]
# The global checklist is what gets appended to a prompt.

# %%
print(render_global_checklist())

# %% [markdown]
# A chatty answer with a misspelled tool and a string where an int belongs.

# %%
answer = """Sure! I'll call the tools:
[{"name": "find_n_largest_number", "arguments": {"nums": [3, 9, 4], "n": 2}},
 {"name": "polygon_area_shoelace", "arguments": {"vertices": [[0, 0], [1, 0], [0, 1]]}},
 {"name": "find_n_largest_numbers", "arguments": {"nums": [3, 9, 4], "n": "2"}}]"""

outcome = parse_lenient(answer)
print("salvage:", outcome.salvage, "calls:", len(outcome.calls))
for f in check(outcome, registry, mode=CheckMode.SCHEMA_ONLY):
    print(f"{f.code.name:3} call={f.call_index} param={f.param}  {f.message}")

# %% [markdown]
# With a gold answer, redundant arguments and a wrong call count show up too.

# %%
gold = parse_lenient('[{"name": "find_n_largest_numbers", "arguments": {"nums": [3, 9, 4], "n": 2}}]').calls
for f in check(outcome, registry, gold, CheckMode.REFERENCED):
    print(f.code.name, f.message)
