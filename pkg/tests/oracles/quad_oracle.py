"""Reference evaluation of the MAS quadrupole coefficients.

Works entirely with Cartesian tensors and full spin matrices: the EFG tensor is
rotated with 3x3 rotation matrices, the complete quadrupole Hamiltonian
(omega_Q / 3) sum_ab V_ab I_a I_b is built in the Zeeman basis, and the second-order
term comes from the matrix commutators of its coherence-order blocks,
(1 / omega_0) sum_{n>0} [A_{-n}, A_n] / n. No Wigner functions or spherical
tensor operators are used, so this is independent of ``quadgroup.hamiltonian``.

Run as a script to print the golden values pinned in ``test_hamiltonian.py``.
"""

import numpy as np
from scipy.spatial.transform import Rotation

MAGIC = np.arccos(1 / np.sqrt(3))


def spin_matrices(spin):
    m = np.arange(spin, -spin - 1, -1.0)
    n = m.size
    ip = np.zeros((n, n), complex)
    for k in range(1, n):
        ip[k - 1, k] = np.sqrt(spin * (spin + 1) - m[k] * (m[k] + 1))
    return m, [(ip + ip.conj().T) / 2, (ip - ip.conj().T) / 2j, np.diag(m).astype(complex)]


def passive(tensor, angles):
    """Components of ``tensor`` in a frame rotated by zyz Euler ``angles``."""
    r = Rotation.from_euler("ZYZ", angles).as_matrix()
    return r.T @ tensor @ r


def coefficients(cq, eta, larmor, rotor, euler, t, spin=1.5):
    m, ops = spin_matrices(spin)
    wq = 2 * np.pi * 3 * cq / (2 * spin * (2 * spin - 1))
    v_pas = np.diag([(eta - 1) / 2, -(eta + 1) / 2, 1.0])
    v_lab = passive(passive(v_pas, euler), [2 * np.pi * rotor * t, MAGIC, 0.0])
    h = sum(v_lab[a, b] * ops[a] @ ops[b] for a in range(3) for b in range(3)) * wq / 3
    order = m[:, None] - m[None, :]

    def block(n):
        return np.where(np.isclose(order, n), h, 0)

    h2 = sum((block(-n) @ block(n) - block(n) @ block(-n)) / n for n in (1, 2, 3)) / (2 * np.pi * larmor)
    ii = spin * (spin + 1)
    first = np.real(np.diag(block(0)))
    w1 = np.linalg.lstsq((3 * m**2 - ii)[:, None], first, rcond=None)[0][0]
    basis = np.stack([(-8 * m**2 + 4 * ii - 1) * m, (-2 * m**2 + 2 * ii - 1) * m], axis=1)
    sol, res, *_ = np.linalg.lstsq(basis, np.real(np.diag(h2)), rcond=None)
    offdiag = np.abs(h2 - np.diag(np.diag(h2))).max()
    return w1, sol[0], sol[1], offdiag


CASES = [
    dict(cq=3.2e6, eta=0.2, larmor=130.9e6, rotor=30e3, euler=(0.3, 1.1, 2.0), t=0.0),
    dict(cq=3.2e6, eta=0.2, larmor=130.9e6, rotor=30e3, euler=(4.0, 0.4, 0.7), t=7.3e-6),
    dict(cq=1.0e6, eta=0.9, larmor=100.0e6, rotor=10e3, euler=(1.7, 2.6, 5.1), t=2.1e-5),
    dict(cq=2.0e6, eta=0.0, larmor=80.0e6, rotor=0.0, euler=(0.0, 0.9, 0.0), t=0.0),
]

if __name__ == "__main__":
    for case in CASES:
        w1, w21, w22, off = coefficients(**case)
        print(f"{w1!r}, {w21!r}, {w22!r}  (second-order off-diagonal residue {off:.1e})")
