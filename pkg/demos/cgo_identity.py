"""CGO test functions against the disk inclusion.

A disk of radius 1 with contrast eta = 2 in a uniform field has a closed form
solution. Seen from the bottom of the disk, its boundary is locally the
parabola y = x^2 / 2. This script

* checks the integral identity on the window |x| < 0.8, y < 0.5 for the test
  functions 1, x1 and a CGO solution exp(xi . x) with tau = 8;
* splits the CGO identity into the I-terms and shows the closure, together
  with the decay of I0 against its closed form.
"""
from curvinc import analysis as an

oracle = an.circle_exact_solution(1.0, 2.0)
frame = oracle.apex_frame()
window = (0.8, 0.5)

print("identity residuals")
tests = {"1": an.ConstantFn(), "x1": an.LinearFn(1.0, 0.0),
         "cgo tau=8": an.CgoFn(an.make_cgo(oracle.interior_gradient, 8.0, frame))}
for name, u0 in tests.items():
    r = an.identity_residual(oracle, u0, window, frame)
    print(f"  u0 = {name:10s} lhs = {r.lhs:.6g}  rhs = {r.rhs:.6g}  residual = {r.residual:.1e}")

print("\n tau   I0 closed      I0 quadrature   |I1|        |I4|        closure")
for tau in (4.0, 8.0, 16.0, 32.0):
    p = an.make_cgo(oracle.interior_gradient, tau, frame)
    rep = an.compute_i_terms(oracle, p, window)
    print(f"{tau:5.0f}  {rep.I0_closed.real:.6e}  {rep.I0_quad.real:.6e}  {abs(rep.I1):.3e}  "
          f"{abs(rep.I4):.3e}  {rep.closure_relative:.1e}")
