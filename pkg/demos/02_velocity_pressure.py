# %% [markdown]
# From h1 to a Navier-Stokes solution.
#
# The velocity is the Leray projection of h1 e1, written through second
# derivatives of the Newtonian potential of h1.  For radial h1 the potential
# has a closed form, and the principal-value and Fourier-multiplier routes
# give independent checks.

# %%
import numpy as np

from nsblowup.heat_forced import ForcingProfile, HeatSolution, Variant
from nsblowup.potential_riesz import (FourierRiesz, PressureField, VelocityField, force_assemble,
                                      ns_residual)

heat = HeatSolution(ForcingProfile(Variant.CRITICAL_LOG_B))
v = VelocityField(heat)
p = PressureField(heat)

# %%
x = np.array([[0.0, 0.0, 0.0], [0.5, 0.25, 0.0], [1.0, -0.3, 0.7]])
t = 0.75
vf = VelocityField(heat, method="fourier", fourier=FourierRiesz(12.0, 96))
print("radial :", v(x, t))
print("fourier:", vf(x, t))

# %% [markdown]
# Divergence and the x1-axis symmetry (v2 = v3 = 0 there).

# %%
g = v.grad(x[1:], t)
print("div / |grad v| :", np.abs(np.trace(g, axis1=1, axis2=2)) / np.linalg.norm(g, axis=(1, 2)))
print("on the axis    :", v(np.array([[0.7, 0, 0]]), t))

# %% [markdown]
# The force is f1 e1 minus the convective term.  The Navier-Stokes residual
# is evaluated with central differences.

# %%
F = lambda y, s: force_assemble(v, y, s)
samples = [(np.array([0.3, 0.2, -0.1]), 0.75), (np.array([1.0, -0.5, 0.7]), 0.5)]
print(f"NS residual {ns_residual(v, p, F, samples):.2e}")
print("v(0, t) along the ladder:",
      [round(float(v(np.zeros(3), 1 - 2.0 ** -k)[0]), 4) for k in range(1, 11)])
