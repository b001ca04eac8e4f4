"""
Prompt assembly, generation, and context refining
=================================================

The generator client speaks an OpenAI-style chat/completions wire protocol.
Here it points at the in-repo mock service (deterministic, offline); point
the same client at any compatible endpoint to use a real model.
"""

from ragforge import (
    GenerationParams,
    Passage,
    PerplexityRefiner,
    build_prompt,
    make_generator_client,
    score_sequence,
)

generator = make_generator_client("mock://generator", model="mock-qa")

# ---------------------------------------------------------------------------
# Grounded prompts carry retrieved passages in the system message; with no
# passages the block disappears entirely and the prompt is closed-book.
# ---------------------------------------------------------------------------

passages = [
    Passage(id="p1", title="Paris", contents="The answer is Paris, the capital of France."),
    Passage(id="p2", title="Seine", contents="The Seine flows through the city."),
]
question = "What is the capital of France?"

grounded = build_prompt(question, passages)
print("system message:")
print(grounded[0]["content"])
print("user message:", grounded[1]["content"])

closed_book = build_prompt(question, [])
print("\nclosed-book system message:", repr(closed_book[0]["content"]))

# ---------------------------------------------------------------------------
# Generate. Params cap prompt and output sizes; temperature 0 plus the
# deterministic mock makes the answer reproducible byte-for-byte.
# ---------------------------------------------------------------------------

params = GenerationParams(max_new_tokens=32, temperature=0.0)
output = generator.generate(grounded, params)
print(f"\nanswer: {output.text!r}")
print(f"prompt tokens ~{output.prompt_tokens}, generated {output.token_count}")

# Token-level log-probabilities are available on request — loop pipelines
# use them to decide when the model is guessing.
probed = generator.generate(grounded, GenerationParams(max_new_tokens=8, logprobs=True))
for token, logprob in probed.token_logprobs:
    print(f"  {token!r}: logprob {logprob:.3f}")

# ---------------------------------------------------------------------------
# Sequence scoring asks: how likely is this exact continuation after this
# context? Ensembling pipelines rank candidate answers with it.
# ---------------------------------------------------------------------------

for candidate in ("Paris", "Berlin"):
    lp = score_sequence(generator, grounded, candidate)
    print(f"score_sequence({candidate!r}) = {lp:.3f}")

# ---------------------------------------------------------------------------
# Refining compresses retrieved context before it reaches the prompt. The
# perplexity refiner keeps the most surprising half of the words (sentence
# enders always survive), so the result stays a subsequence of the input.
# ---------------------------------------------------------------------------

refiner = PerplexityRefiner(generator, keep_ratio=0.5)
result = refiner.refine(question, passages)
print(f"\nrefined ({result.input_words} -> {result.output_words} words, {result.method}):")
print(" ", result.text)
