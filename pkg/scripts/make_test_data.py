"""Regenerate the small fixture files under tests/data."""
from pathlib import Path

from coftherm.structio import write_bin_profile, write_structure
from coftherm.synthetic import ch_chain, synthetic_profile

out = Path(__file__).resolve().parents[1] / "tests" / "data"
out.mkdir(parents=True, exist_ok=True)
write_structure(ch_chain(), out / "chainH.cif")
write_bin_profile(synthetic_profile(kappa=1.0, name="synthetic_k1"), out / "synthetic_k1.csv")
print("wrote", sorted(p.name for p in out.iterdir()))
