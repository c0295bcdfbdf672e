"""Fused ensemble cost/gradient kernel.

Specialised to Hamiltonians ``diag(d) + s (ux Ix + uy Iy)`` and a single-entry
target ``tau |r><c|``. Writing ``ux Ix + uy Iy = P (a Ix) P^dagger`` with
``P = diag(exp(-i phi m))`` turns every step into a real symmetric tridiagonal
eigenproblem, so ``V_j = P_j Q_j`` with real orthogonal ``Q_j``. States are
carried in the instantaneous eigenbasis, and the backward pass only needs the
two row vectors ``e_r^T M_j`` and ``e_c^T M_j`` because the target has rank one.
The step derivative is the same ``V ((V^dagger (-i H_k dt) V) * G) V^dagger``
used in ``quadgroup.propagation``.
"""

import numpy as np
from numba import njit

_EPS = 2.220446049250313e-16


@njit(cache=True, nogil=True, error_model="numpy")
def tridiagonal_eigh(d, e, z):
    """Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.

    On entry ``d`` holds the diagonal, ``e[i]`` the (i, i+1) element with
    ``e[n-1] = 0``, and ``z`` the identity. On exit ``d`` holds eigenvalues and
    the columns of ``z`` the eigenvectors.
    """
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 60:
                raise RuntimeError("tridiagonal eigensolver did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            # plain sqrt instead of hypot: entries are rad/s scale and split before g*g can overflow
            r = np.sqrt(g * g + 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.sqrt(f * f + g * g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


@njit(cache=True, nogil=True, error_model="numpy")
def _phase_kernel(theta, eprod):
    """(exp(i theta) - 1) / (i theta), with exp(i theta) passed in as ``eprod``."""
    if abs(theta) < 1e-2:
        t2 = theta * theta
        re = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
        im = theta * (0.5 - t2 / 24.0 + t2 * t2 / 720.0)
        return complex(re, im)
    return (eprod - 1.0) / (1j * theta)


@njit(cache=True, nogil=True, error_model="numpy")
def ensemble_kernel(drift, scales, weights, ux, uy, dt, m, ix_off, rho0, r, c, tau, norm, grad, fids):
    """Weighted ensemble cost; accumulates the gradient into ``grad`` (N, 2).

    Per-member fidelities are written to ``fids``. Returns the expected cost.

    Three sweeps per member: eigendecompose every step; carry the target rows
    ``e_r^T U_{N-1}..U_{j+1} V_j E_j`` backwards; then carry the two columns
    ``V_j^dagger M_j rho0 u^dagger`` forwards (``u`` a row of the total
    propagator, ``M_j`` the product of the first j steps), which is all the
    density-matrix information the rank-one gradient needs.
    """
    n_members, n_steps, n = drift.shape
    amp = np.empty(n_steps)
    cphi = np.empty(n_steps)
    sphi = np.empty(n_steps)
    ph = np.empty((n_steps, n), dtype=np.complex128)
    for j in range(n_steps):
        amp[j] = np.hypot(ux[j], uy[j])
        phi = np.arctan2(uy[j], ux[j])
        cphi[j] = np.cos(phi)
        sphi[j] = np.sin(phi)
        for a in range(n):
            ph[j, a] = np.exp(-1j * phi * m[a])

    q_all = np.empty((n_steps, n, n))
    e_all = np.empty((n_steps, n))
    expo = np.empty((n_steps, n), dtype=np.complex128)
    w_all = np.empty((n_steps, n, n), dtype=np.complex128)
    al = np.empty((n_steps, n), dtype=np.complex128)
    be = np.empty((n_steps, n), dtype=np.complex128)
    dvec = np.empty(n)
    evec = np.empty(n)
    diagph = np.empty(n, dtype=np.complex128)
    alpha = np.empty(n, dtype=np.complex128)
    beta = np.empty(n, dtype=np.complex128)
    nalpha = np.empty(n, dtype=np.complex128)
    nbeta = np.empty(n, dtype=np.complex128)
    ur = np.empty(n, dtype=np.complex128)
    uc = np.empty(n, dtype=np.complex128)
    xv = np.empty(n, dtype=np.complex128)
    yv = np.empty(n, dtype=np.complex128)
    tx = np.empty(n, dtype=np.complex128)
    ty = np.empty(n, dtype=np.complex128)
    gm = np.empty((n, n), dtype=np.complex128)
    iq = np.empty((n, n))
    aq = np.empty((n, n))
    total_cost = 0.0
    last = n_steps - 1

    for l in range(n_members):
        s = scales[l]
        for j in range(n_steps):
            for a in range(n):
                dvec[a] = drift[l, j, a]
                evec[a] = s * amp[j] * ix_off[a] if a < n - 1 else 0.0
            q = q_all[j]
            for a in range(n):
                for b in range(n):
                    q[a, b] = 1.0 if a == b else 0.0
            tridiagonal_eigh(dvec, evec, q)
            for a in range(n):
                e_all[j, a] = dvec[a]
                expo[j, a] = np.exp(-1j * dvec[a] * dt)
            if j > 0:
                # W_{j-1} = V_j^dagger V_{j-1} = Q_j^T diag(conj(ph_j) ph_{j-1}) Q_{j-1}
                qprev = q_all[j - 1]
                w = w_all[j - 1]
                for a in range(n):
                    diagph[a] = np.conj(ph[j, a]) * ph[j - 1, a]
                for p in range(n):
                    for b in range(n):
                        acc = 0j
                        for a in range(n):
                            acc += q[a, p] * diagph[a] * qprev[a, b]
                        w[p, b] = acc

        qlast = q_all[last]
        for p in range(n):
            alpha[p] = ph[last, r] * qlast[r, p] * expo[last, p]
            beta[p] = ph[last, c] * qlast[c, p] * expo[last, p]
        for j in range(last, -1, -1):
            if j < last:
                w = w_all[j]
                for b in range(n):
                    acc_a = 0j
                    acc_b = 0j
                    for p in range(n):
                        acc_a += alpha[p] * w[p, b]
                        acc_b += beta[p] * w[p, b]
                    nalpha[b] = acc_a * expo[j, b]
                    nbeta[b] = acc_b * expo[j, b]
                for b in range(n):
                    alpha[b] = nalpha[b]
                    beta[b] = nbeta[b]
            for b in range(n):
                al[j, b] = alpha[b]
                be[j, b] = beta[b]

        # rows r and c of the total propagator: u = row_0 V_0^dagger, V_0 = diag(ph_0) Q_0
        q0 = q_all[0]
        for a in range(n):
            acc_r = 0j
            acc_c = 0j
            for p in range(n):
                acc_r += al[0, p] * q0[a, p]
                acc_c += be[0, p] * q0[a, p]
            ur[a] = acc_r * np.conj(ph[0, a])
            uc[a] = acc_c * np.conj(ph[0, a])
        val = 0j
        for a in range(n):
            for b in range(n):
                val += ur[a] * rho0[a, b] * np.conj(uc[b])
        cval = np.conj(tau) * val
        fid = (cval.real * cval.real + cval.imag * cval.imag) / norm
        fids[l] = fid
        wl = weights[l]
        total_cost += wl * (1.0 - fid)
        pref = -2.0 / norm * wl

        # x_0 = V_0^dagger rho0 u_r^dagger, y_0 = V_0^dagger rho0 u_c^dagger
        for a in range(n):
            acc_x = 0j
            acc_y = 0j
            for b in range(n):
                acc_x += rho0[a, b] * np.conj(ur[b])
                acc_y += rho0[a, b] * np.conj(uc[b])
            tx[a] = np.conj(ph[0, a]) * acc_x
            ty[a] = np.conj(ph[0, a]) * acc_y
        for p in range(n):
            acc_x = 0j
            acc_y = 0j
            for a in range(n):
                acc_x += q0[a, p] * tx[a]
                acc_y += q0[a, p] * ty[a]
            xv[p] = acc_x
            yv[p] = acc_y

        for j in range(n_steps):
            if j > 0:
                w = w_all[j - 1]
                ex = expo[j - 1]
                for b in range(n):
                    tx[b] = ex[b] * xv[b]
                    ty[b] = ex[b] * yv[b]
                for p in range(n):
                    acc_x = 0j
                    acc_y = 0j
                    for b in range(n):
                        acc_x += w[p, b] * tx[b]
                        acc_y += w[p, b] * ty[b]
                    xv[p] = acc_x
                    yv[p] = acc_y
            q = q_all[j]
            # Q^T Ix Q (symmetric) and Q^T A Q (antisymmetric) with Iy = -i A
            for a in range(n):
                for b in range(n):
                    lo = ix_off[a - 1] * q[a - 1, b] if a > 0 else 0.0
                    hi = ix_off[a] * q[a + 1, b] if a < n - 1 else 0.0
                    iq[a, b] = lo + hi
                    aq[a, b] = hi - lo
            ea = e_all[j]
            ex = expo[j]
            for a in range(n):
                gm[a, a] = 1.0
                for b in range(a + 1, n):
                    g = _phase_kernel((ea[a] - ea[b]) * dt, np.conj(ex[a]) * ex[b])
                    gm[a, b] = g
                    gm[b, a] = np.conj(g)
            alj = al[j]
            bej = be[j]
            sx1 = 0j
            sy1 = 0j
            sx2 = 0j
            sy2 = 0j
            for a in range(n):
                for b in range(n):
                    xab = 0.0
                    aab = 0.0
                    for k in range(n):
                        xab += q[k, a] * iq[k, b]
                        aab += q[k, a] * aq[k, b]
                    g = gm[a, b]
                    f1 = alj[a] * g * yv[b]
                    f2 = bej[a] * g * xv[b]
                    sx1 += xab * f1
                    sx2 += xab * f2
                    sy1 += aab * f1
                    sy2 += aab * f2
            sy1 *= -1j
            sy2 *= -1j
            cp = cphi[j]
            sp = sphi[j]
            s1x = cp * sx1 - sp * sy1
            s1y = sp * sx1 + cp * sy1
            s2x = cp * sx2 - sp * sy2
            s2y = sp * sx2 + cp * sy2
            fac = -1j * s * dt * np.conj(tau)
            dx = fac * s1x + np.conj(-1j * s * dt * s2x) * np.conj(tau)
            dy = fac * s1y + np.conj(-1j * s * dt * s2y) * np.conj(tau)
            grad[j, 0] += pref * (dx * np.conj(cval)).real
            grad[j, 1] += pref * (dy * np.conj(cval)).real
    return total_cost
