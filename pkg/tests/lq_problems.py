"""Linear-quadratic test problems and their independent Riccati oracle."""

import numpy as np

from hkdmpc.hsddp import Phase

DT = 0.1
A = np.array([[1.0, DT], [0.0, 1.0]])
B = np.array([[0.5 * DT * DT], [DT]])
Q = np.diag([1.0, 0.1])
R = np.array([[0.01]])
QF = np.diag([10.0, 1.0])
X0 = np.array([1.0, -0.5])


class LqPhase(Phase):
    """Double integrator, cost ``1/2 x'Qx + 1/2 u'Ru`` per node; ``QF`` only on the last phase."""

    nx = 2
    nu = 1

    def __init__(self, n_nodes, t0=0.0, last=True, tag="lq"):
        self.n_nodes = n_nodes
        self.dt = DT
        self.t0 = t0
        self.last = last
        self.tag = tag

    def step(self, k, x, u):
        return A @ x + B @ u

    def linearize(self, xs, us):
        n = len(us)
        return np.broadcast_to(A, (n, 2, 2)), np.broadcast_to(B, (n, 2, 1))

    def stage_cost(self, xs, us):
        return 0.5 * np.einsum("ni,ij,nj->n", xs, Q, xs) + 0.5 * np.einsum("ni,ij,nj->n", us, R, us)

    def stage_cost_derivatives(self, xs, us):
        n = len(us)
        return xs @ Q, us @ R, np.broadcast_to(Q, (n, 2, 2)), np.broadcast_to(R, (n, 1, 1)), np.zeros((n, 1, 2))

    def terminal_cost(self, x):
        return 0.5 * x @ QF @ x if self.last else 0.0

    def terminal_cost_derivatives(self, x):
        return (QF @ x, QF) if self.last else (np.zeros(2), np.zeros((2, 2)))


def riccati(n_nodes, x0=X0):
    """Finite-horizon discrete Riccati recursion: (gains per node, optimal cost, optimal states)."""
    P = QF
    gains = []
    for _ in range(n_nodes):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        gains.append(K)
        P = Q + A.T @ P @ A + A.T @ P @ B @ K
    gains = gains[::-1]
    xs = [np.asarray(x0, dtype=float)]
    for K in gains:
        xs.append(A @ xs[-1] + B @ (K @ xs[-1]))
    return np.array(gains), 0.5 * x0 @ P @ x0, np.array(xs)


def split_phases(first, total):
    return [LqPhase(first, last=False, tag="a"), LqPhase(total - first, t0=first * DT, tag="b")]
