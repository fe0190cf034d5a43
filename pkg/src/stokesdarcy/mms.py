"""Closed-form benchmark solution and the data it induces.

    u_ff = -cos(pi x) sin(pi y)      v_ff = sin(pi x) cos(pi y)
    p_ff = y sin(pi x) / 2           p_pm = y^2 sin(pi x) / 2

The velocity is divergence free, so -div T = -mu lap v + grad p.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import PhysicalParams, SourceFields

__all__ = ["MmsSolution", "mms_sources"]

PI = np.pi


@dataclass(frozen=True)
class MmsSolution:
    @staticmethod
    def u(x, y):
        return -np.cos(PI * x) * np.sin(PI * y)

    @staticmethod
    def v(x, y):
        return np.sin(PI * x) * np.cos(PI * y)

    @staticmethod
    def p_ff(x, y):
        return y * np.sin(PI * x) / 2

    @staticmethod
    def p_pm(x, y):
        return y**2 * np.sin(PI * x) / 2

    # first derivatives
    @staticmethod
    def grad_u(x, y):
        return PI * np.sin(PI * x) * np.sin(PI * y), -PI * np.cos(PI * x) * np.cos(PI * y)

    @staticmethod
    def grad_v(x, y):
        return PI * np.cos(PI * x) * np.cos(PI * y), -PI * np.sin(PI * x) * np.sin(PI * y)

    @staticmethod
    def grad_p_ff(x, y):
        return PI * y * np.cos(PI * x) / 2, np.sin(PI * x) / 2

    @staticmethod
    def grad_p_pm(x, y):
        return PI * y**2 * np.cos(PI * x) / 2, y * np.sin(PI * x)

    # second derivatives
    @staticmethod
    def lap_u(x, y):
        return 2 * PI**2 * np.cos(PI * x) * np.sin(PI * y)

    @staticmethod
    def lap_v(x, y):
        return -2 * PI**2 * np.sin(PI * x) * np.cos(PI * y)

    @staticmethod
    def hess_p_pm_diag(x, y):
        """(d2/dx2, d2/dy2) of p_pm."""
        return -(PI**2) * y**2 * np.sin(PI * x) / 2, np.sin(PI * x)

    def darcy_velocity(self, params: PhysicalParams, x, y):
        gx, gy = self.grad_p_pm(x, y)
        return -params.kxx / params.mu * gx, -params.kyy / params.mu * gy


def mms_sources(params: PhysicalParams) -> SourceFields:
    sol = MmsSolution()
    mu = params.mu

    def f_ff(x, y):
        px, py = sol.grad_p_ff(x, y)
        return -mu * sol.lap_u(x, y) + px, -mu * sol.lap_v(x, y) + py

    def f_pm(x, y):
        pxx, pyy = sol.hess_p_pm_diag(x, y)
        return -(params.kxx * pxx + params.kyy * pyy) / mu

    def vbar(x, y):
        return sol.u(x, y), sol.v(x, y)

    def mass_jump(x):
        # (v_ff - v_pm) . n on y = 0, n = (0, 1)
        return sol.v(x, 0.0) - sol.darcy_velocity(params, x, 0.0)[1]

    def normal_jump(x):
        # -n.T.n - p_pm = p_ff - 2 mu dv/dy - p_pm
        return sol.p_ff(x, 0.0) - 2 * mu * sol.grad_v(x, 0.0)[1] - sol.p_pm(x, 0.0)

    def tangential_jump(x):
        # u_ff - sqrt(K)/alpha (du/dy + dv/dx); the Darcy slip term vanishes
        # on y = 0 because dp_pm/dx is zero there
        shear = sol.grad_u(x, 0.0)[1] + sol.grad_v(x, 0.0)[0]
        return sol.u(x, 0.0) - params.sqrtK / params.alpha * shear

    return SourceFields(
        f_ff=f_ff,
        f_pm=f_pm,
        vbar=vbar,
        pbar=sol.p_pm,
        mass_jump=mass_jump,
        normal_jump=normal_jump,
        tangential_jump=tangential_jump,
    )
