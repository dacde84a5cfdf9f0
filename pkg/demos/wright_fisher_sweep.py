# Wright-Fisher selection: spread of the estimate shrinks as simulations are added.
from flimo import harness

res = harness.bench("wf-ne1e4-sweep", 10, seed=0, sweep=(10, 100, 1000))
for row in res["summary"]:
    print(f"n_sim={row['n_sim']:5d}  median s={row['median']:.4f}  sd={row['sd']:.2e}")
print("log-log slope:", round(res["slope"]["s"], 3))
