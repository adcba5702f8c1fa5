"""Boundary measurements of two inclusions on the top side.

The same mean-zero current g = t (1 - t^2), t = x / 5, is injected through the
top side for two cap-shaped inclusions; the resulting boundary voltages are
compared there (each up to its own additive constant). Moving the cap by 0.5
changes the data about twenty times more than remeshing the same cap does.
"""
from curvinc.experiment import compare_inclusions, comparison_noise_floor
from curvinc.geometry import InterfaceSpec

cap = InterfaceSpec.cap(1.0, 1.5, apex=(0.0, 2.0))
moved = InterfaceSpec.cap(1.0, 1.5, apex=(0.5, 2.0))

floor = comparison_noise_floor(cap, mesh_level=1)
cases = {
    "same cap": compare_inclusions(cap, cap, mesh_level=1),
    "eta 2 vs 3": compare_inclusions(cap, cap, eta=2.0, eta_t=3.0, mesh_level=1),
    "moved by 0.5": compare_inclusions(cap, moved, mesh_level=1),
}
print(f"remeshing noise floor (L2 on the top side): {floor:.3e}")
for name, c in cases.items():
    print(f"{name:14s} L2 = {c.l2:.3e}   max = {c.max:.3e}   ratio to floor = {c.l2 / floor:.1f}")
