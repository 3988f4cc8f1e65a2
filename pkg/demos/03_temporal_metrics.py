# %% [markdown]
# # Guessing entropy and the floor that bins provide
#
# Guessing entropy counts the wrong guesses an attacker makes before hitting
# the real spend when trying ring members in order of likelihood. Effective
# untraceability rescales it so that a uniform ring of size n scores n.

# %%
from ringtrace.temporal import (LogGammaDensity, effective_untraceability, guessing_entropy,
                                posterior_real_spend, table4_csv)

probs = [0.8, 0.17, 0.02, 0.01]
print("Ge =", round(guessing_entropy(probs), 6), " EU =", round(effective_untraceability(probs), 6))
print("uniform ring of 4: EU =", effective_untraceability([0.25] * 4))

# %% [markdown]
# A ring of five outputs drawn uniformly over a year old chain: the youngest
# member carries most of the posterior when spends are usually recent.

# %%
HOUR = 3600
ages = [2 * HOUR, 30 * 24 * HOUR, 90 * 24 * HOUR, 200 * 24 * HOUR, 330 * 24 * HOUR]
post = posterior_real_spend(ages, LogGammaDensity(), lambda a: 1.0 / len(ages))
print("posterior:", [round(p, 3) for p in post.probs], "EU:", round(post.effective_untraceability, 3))

# %% [markdown]
# If the sampler tracks the spend distribution only to within a factor, the
# worst-case untraceability depends on bin size. Bigger bins hold up better
# when the model is badly off.

# %%
print(table4_csv())
