# %% [markdown]
# # Chain reactions on a synthetic chain
#
# A ring whose only reference is a single output gives its spend away. That
# output can then be ruled out of every other ring that mentions it, which may
# leave another ring with one candidate, and so on. This script generates a
# small chain with ground truth and measures how far the cascade reaches.

# %%
from ringtrace import GenConfig, closure_deduce, fixpoint_deduce, generate_chain
from ringtrace.deduction import deducible_fraction, score_against_truth
from ringtrace.fixtures import counting_chain

# %% [markdown]
# Start with the toy case: three rings where the plain cascade gets stuck, yet
# counting outputs against inputs still pins one spend down.

# %%
chain, truth = counting_chain()
for _, ring in chain.inputs():
    print(ring.input_id, "refs", ring.refs)
print("fixpoint deduced:", fixpoint_deduce(chain).deduced)
print("closure deduced: ", closure_deduce(chain).deduced)

# %% [markdown]
# Now a generated chain where a third of all inputs use no mixins at all.

# %%
config = GenConfig(num_blocks=1500, txs_per_block=3.0,
                   mixin_count_distribution={0: 0.35, 1: 0.2, 2: 0.2, 3: 0.15, 5: 0.1}, seed=42)
chain, truth = generate_chain(config)
result = fixpoint_deduce(chain)
score = score_against_truth(result, chain, truth)
print(f"{chain.num_inputs()} inputs, {score.deduced} deduced, precision {score.precision:.3f}")
print(f"propagation waves: {result.stats.iterations}")

# %%
for m in (1, 2, 3, 5):
    print(f"mixins={m}: {deducible_fraction(result, chain, mixins=m):.1%} of rings traced")
