"""Flat array layout of a polynomial system consumed by both solver backends."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..polynomial import PolynomialOdeSystem

# RODAS4 (Hairer & Wanner), KPP storage: lower-triangular rows packed in order
ROS_GAMMA = 0.25
ROS_A = np.array([
    1.544, 0.9466785280815826, 0.2557011698983284, 3.314825187068521,
    2.896124015972201, 0.9986419139977817, 1.221224509226641, 6.019134481288629,
    12.53708332932087, -0.6878860361058950, 1.221224509226641, 6.019134481288629,
    12.53708332932087, -0.6878860361058950, 1.0,
])
ROS_C = np.array([
    -5.6688, -2.430093356833875, -0.2063599157091915, -0.1073529058151375,
    -9.594562251023355, -20.47028614809616, 7.496443313967647, -10.24680431464352,
    -33.99990352819905, 11.70890893206160, 8.083246795921522, -7.981132988064893,
    -31.52159432874371, 16.31930543123136, -6.058818238834054,
])
ROS_M = np.array([ROS_A[6], ROS_A[7], ROS_A[8], ROS_A[9], 1.0, 1.0])

# solver status codes
OK, STEP_UNDERFLOW, NONFINITE, NEGATIVE, MAX_STEPS = 0, 1, 2, 3, 4
STATUS_TEXT = {
    OK: "ok",
    STEP_UNDERFLOW: "step size underflow (stiffness unresolved)",
    NONFINITE: "non-finite value in state or derivative",
    NEGATIVE: "state dropped below -abs_tol and could not be recovered by smaller steps",
    MAX_STEPS: "maximum number of steps exceeded",
}


@dataclass(frozen=True)
class CompiledSystem:
    """CSR-like term list: term k adds ``coef[k] * prod x[var]**pow`` to equation ``eq[k]``."""

    n: int
    term_eq: np.ndarray
    term_coef: np.ndarray
    fac_ptr: np.ndarray
    fac_var: np.ndarray
    fac_pow: np.ndarray

    @property
    def n_terms(self) -> int:
        return len(self.term_eq)

    def exponent_matrix(self) -> np.ndarray:
        e = np.zeros((self.n_terms, self.n), dtype=np.int64)
        for k in range(self.n_terms):
            for f in range(self.fac_ptr[k], self.fac_ptr[k + 1]):
                e[k, self.fac_var[f]] = self.fac_pow[f]
        return e


def compile_system(odes: PolynomialOdeSystem) -> CompiledSystem:
    term_eq, term_coef, fac_ptr, fac_var, fac_pow = [], [], [0], [], []
    for i, eq in enumerate(odes.equations):
        for exps, coef in eq:
            term_eq.append(i)
            term_coef.append(coef)
            for j, e in enumerate(exps):
                if e:
                    fac_var.append(j)
                    fac_pow.append(e)
            fac_ptr.append(len(fac_var))
    return CompiledSystem(
        n=odes.n,
        term_eq=np.asarray(term_eq, dtype=np.int32),
        term_coef=np.asarray(term_coef, dtype=np.float64),
        fac_ptr=np.asarray(fac_ptr, dtype=np.int32),
        fac_var=np.asarray(fac_var, dtype=np.int32),
        fac_pow=np.asarray(fac_pow, dtype=np.int32),
    )
