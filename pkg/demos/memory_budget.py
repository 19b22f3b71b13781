"""How much must each strategy keep around between experiences?

Latent replay stores exemplars of g's output, so its cost follows the latent
shape at the freeze depth k. A partial hypernetwork stores one copy of itself,
which shrinks as fewer layers are generated.

Run:  python3 demos/memory_budget.py
"""

from partialhn.harness import emit_compression_table, emit_memory_table, load_config

cifar = load_config(overrides={"nf": 20, "image_size": 32, "buffer_capacity": 200, "n_experiences": 20, "num_classes": 100})

print("freeze depth k | latent replay (200 exemplars) | partial hypernetwork")
rows = emit_memory_table(cifar)
lr = [r for r in rows if r["method"] == "latent-replay"]
hn = [r for r in rows if r["method"] == "partial-hn"]
for a, b in zip(lr, hn):
    print(f"{a['k']:>14} | {a['detail']:>12} = {a['mib']:>6} MiB | {b['detail']:>9,} params = {b['mib']} MiB")

print("\nfull hypernetwork size against the lookup dimension d:")
for r in emit_compression_table(cifar):
    print(f"  d={r['d']:>2}: {r['total_hn_params']:>9,} parameters, {r['compression_pct']:>2}% smaller than d=64")
